//! Keyword spotting with filler normalization, modifier re-ranking and
//! retrieval evaluation.
//!
//! A keyword's score on an image is its forced-alignment log-likelihood
//! minus the best unconstrained character-loop log-likelihood, divided by
//! the frame count. Because the loop contains every keyword path, scores
//! never exceed zero.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::alphabet::{DecompTable, ModifierSlot, Zone};
use crate::error::{Error, Result};
use crate::ghmm::{loop_score, viterbi_table, EmissionTable, HmmSet};
use crate::wordrec::{host_index, ObservedModifier};
use crate::xmap::{make_mid_lexicon, map_lexicon, Lut};

#[derive(Debug, Clone, PartialEq)]
pub struct KeywordQuery {
    pub word: String,
    pub middle: Vec<char>,
    pub source: Vec<char>,
    pub layout: Vec<ModifierSlot>,
}

impl KeywordQuery {
    pub fn count(&self, zone: Zone) -> usize {
        self.layout.iter().filter(|m| m.zone == zone).count()
    }
}

/// Maps a target keyword to its middle-zone form, then to source labels.
pub fn make_query(word: &str, table: &DecompTable, lut: &Lut) -> Result<KeywordQuery> {
    let t = make_mid_lexicon(&[String::from(word)], table)?;
    let t = map_lexicon(&t, lut)?;
    Ok(KeywordQuery {
        word: String::from(word),
        middle: t.middle[0].clone(),
        source: t.source[0].clone(),
        layout: t.layouts[0].clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpotScore {
    pub keyword: f64,
    pub filler: f64,
    /// Per-frame normalized score; `-inf` marks a reject.
    pub score: f64,
    pub frames: usize,
}

impl SpotScore {
    pub fn is_reject(&self) -> bool {
        self.score == f64::NEG_INFINITY
    }
}

/// Filler log-likelihood of one image, shared by all keywords.
pub fn filler_score(table: &EmissionTable, set: &HmmSet) -> Result<f64> {
    Ok(loop_score(table, set)?.0)
}

/// Scores `query` against a precomputed emission table and filler score.
/// Also returns the keyword alignment spans (empty for a reject).
pub fn spot_score_with(
    table: &EmissionTable,
    filler: f64,
    query: &KeywordQuery,
    set: &HmmSet,
) -> Result<(SpotScore, Vec<(usize, usize)>)> {
    let frames = table.frames();
    let word = set.word_model(&query.source)?;
    match viterbi_table(table, set, &word) {
        Ok(al) => Ok((
            SpotScore {
                keyword: al.log_likelihood,
                filler,
                score: (al.log_likelihood - filler) / frames as f64,
                frames,
            },
            al.spans,
        )),
        Err(Error::TooFewFrames { .. }) => Ok((
            SpotScore {
                keyword: f64::NEG_INFINITY,
                filler,
                score: f64::NEG_INFINITY,
                frames,
            },
            Vec::new(),
        )),
        Err(e) => Err(e),
    }
}

pub fn spot_score(table: &EmissionTable, query: &KeywordQuery, set: &HmmSet) -> Result<SpotScore> {
    let filler = filler_score(table, set)?;
    Ok(spot_score_with(table, filler, query, set)?.0)
}

pub fn decide(score: &SpotScore, threshold: f64) -> bool {
    score.score >= threshold
}

/// One global threshold plus optional per-keyword overrides.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Thresholds {
    pub global: f64,
    pub local: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdMode {
    Local,
    Global,
}

impl Thresholds {
    pub fn get(&self, keyword: &str, mode: ThresholdMode) -> f64 {
        match mode {
            ThresholdMode::Global => self.global,
            ThresholdMode::Local => self.local.get(keyword).copied().unwrap_or(self.global),
        }
    }
}

/// F1 at threshold `t` over `(score, relevant)` pairs.
pub fn f1_at(scored: &[(f64, bool)], t: f64) -> f64 {
    let (mut tp, mut fp, mut fne) = (0usize, 0usize, 0usize);
    for &(s, rel) in scored {
        match (s >= t, rel) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fne += 1,
            _ => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fne) as f64
}

/// Threshold maximizing F1 among the finite scores, ties to the larger
/// threshold. Returns `(threshold, f1)`; `(0, 0)` without finite scores.
pub fn optimize_threshold(scored: &[(f64, bool)]) -> (f64, f64) {
    let mut cands: Vec<f64> = scored.iter().map(|&(s, _)| s).filter(|s| s.is_finite()).collect();
    cands.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    cands.dedup();
    let mut best = (0.0, 0.0);
    let mut first = true;
    for t in cands {
        let f = f1_at(scored, t);
        if first || f > best.1 {
            best = (t, f);
            first = false;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RerankMode {
    /// Compare modifier labels and positions.
    Labels,
    /// Compare per-zone modifier counts only.
    Counts,
}

/// Whether the modifiers observed in a hit agree with the query layout.
///
/// `ranges` are the image column ranges of the keyword's aligned
/// characters. In label mode each query modifier needs a distinct observed
/// modifier of the same zone carrying its label, attached within one
/// character of its base.
pub fn modifiers_match(
    observed: &[ObservedModifier],
    ranges: &[(usize, usize)],
    query: &KeywordQuery,
    mode: RerankMode,
) -> bool {
    for zone in [Zone::Upper, Zone::Lower] {
        if observed.iter().filter(|m| m.zone == zone).count() != query.count(zone) {
            return false;
        }
    }
    if mode == RerankMode::Counts {
        return true;
    }
    if ranges.is_empty() {
        return query.layout.is_empty();
    }
    let hosts: Vec<usize> = observed.iter().map(|m| host_index(ranges, m.center_x)).collect();
    let fits = |q: &ModifierSlot, o: usize| {
        let m = &observed[o];
        m.zone == q.zone && m.labels.contains(&q.label) && hosts[o].abs_diff(q.base_index) <= 1
    };
    // bipartite matching, query slots against observations
    let mut owner: Vec<Option<usize>> = vec![None; observed.len()];
    fn augment(
        q: usize,
        slots: &[ModifierSlot],
        fits: &dyn Fn(&ModifierSlot, usize) -> bool,
        owner: &mut [Option<usize>],
        seen: &mut [bool],
    ) -> bool {
        for o in 0..owner.len() {
            if seen[o] || !fits(&slots[q], o) {
                continue;
            }
            seen[o] = true;
            if owner[o].is_none_or(|p| augment(p, slots, fits, owner, seen)) {
                owner[o] = Some(q);
                return true;
            }
        }
        false
    }
    (0..query.layout.len()).all(|q| {
        let mut seen = vec![false; observed.len()];
        augment(q, &query.layout, &fits, &mut owner, &mut seen)
    })
}

/// A scored image for one keyword.
#[derive(Debug, Clone, PartialEq)]
pub struct SpotHit {
    pub image: usize,
    pub score: SpotScore,
    pub observed: Vec<ObservedModifier>,
    /// Column range of each aligned keyword character.
    pub ranges: Vec<(usize, usize)>,
}

/// Keeps the hits whose modifiers agree with the query.
pub fn rerank_with_modifiers(hits: &[SpotHit], query: &KeywordQuery, mode: RerankMode) -> Vec<SpotHit> {
    hits.iter()
        .filter(|h| modifiers_match(&h.observed, &h.ranges, query, mode))
        .cloned()
        .collect()
}

/// Full ranking with modifier-verified hits ahead of the rest, each group
/// in descending score order.
pub fn demote_unverified(hits: &[SpotHit], query: &KeywordQuery, mode: RerankMode) -> Vec<SpotHit> {
    let (mut ok, mut rest): (Vec<SpotHit>, Vec<SpotHit>) = hits
        .iter()
        .cloned()
        .partition(|h| modifiers_match(&h.observed, &h.ranges, query, mode));
    sort_hits(&mut ok);
    sort_hits(&mut rest);
    ok.extend(rest);
    ok
}

/// Descending score, ties by image index.
pub fn sort_hits(hits: &mut [SpotHit]) {
    hits.sort_by(|a, b| {
        b.score
            .score
            .partial_cmp(&a.score.score)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.image.cmp(&b.image))
    });
}

/// One keyword's ranked list: relevance and acceptance of each item, best
/// first, plus the number of relevant images in the corpus.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedList {
    pub items: Vec<(bool, bool)>,
    pub total_relevant: usize,
}

/// Trapezoidal area under the precision-recall curve of a ranking, starting
/// from (recall 0, precision 1). `None` when nothing is relevant.
pub fn average_precision(relevant: &[bool], total_relevant: usize) -> Option<f64> {
    if total_relevant == 0 {
        return None;
    }
    let (mut r0, mut p0, mut area) = (0.0, 1.0, 0.0);
    let mut hits = 0usize;
    for (k, &rel) in relevant.iter().enumerate() {
        if rel {
            hits += 1;
        }
        let r = hits as f64 / total_relevant as f64;
        let p = hits as f64 / (k + 1) as f64;
        area += (r - r0) * (p + p0) / 2.0;
        r0 = r;
        p0 = p;
    }
    Some(area)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub ap: Vec<f64>,
    pub map: f64,
    /// Keywords without relevant images, scored AP 0.
    pub flagged: Vec<usize>,
}

pub fn precision_recall(tp: usize, fp: usize, fn_: usize) -> (f64, f64) {
    let p = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 1.0 };
    let r = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 1.0 };
    (p, r)
}

pub fn evaluate_retrieval(lists: &[RankedList]) -> Result<RetrievalMetrics> {
    if lists.is_empty() {
        return Err(Error::NoData("no keywords".into()));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut ap = Vec::with_capacity(lists.len());
    let mut flagged = Vec::new();
    for (k, list) in lists.iter().enumerate() {
        let rel: Vec<bool> = list.items.iter().map(|&(r, _)| r).collect();
        let found = rel.iter().filter(|&&r| r).count();
        if found > list.total_relevant {
            return Err(Error::InvalidArgument("more relevant hits than relevant images".into()));
        }
        let t = list.items.iter().filter(|&&(r, a)| r && a).count();
        tp += t;
        fp += list.items.iter().filter(|&&(r, a)| !r && a).count();
        fn_ += list.total_relevant - t;
        match average_precision(&rel, list.total_relevant) {
            Some(a) => ap.push(a),
            None => {
                ap.push(0.0);
                flagged.push(k);
            }
        }
    }
    let (precision, recall) = precision_recall(tp, fp, fn_);
    let map = ap.iter().sum::<f64>() / ap.len() as f64;
    Ok(RetrievalMetrics {
        tp,
        fp,
        fn_,
        precision,
        recall,
        ap,
        map,
        flagged,
    })
}
