//! Cross-script word recognition.
//!
//! The middle zone is decoded against the source-mapped lexicon, each
//! hypothesis is expanded back into target spellings, observed modifiers are
//! attached near the aligned characters, and candidates are ranked against
//! the target lexicon by edit distance in the zone-wise canonical alphabet.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::alphabet::{Decomposed, ModifierSlot, Zone};
use crate::error::{Error, Result};
use crate::ghmm::{decode_nbest, Alignment, HmmSet, WordModel};
use crate::phog::{window_features, WindowGeometry};
use crate::raster::{Component, GrayImage};
use crate::rbfsvm::SvmModel;
use crate::synthscript::GroundTruth;
use crate::xmap::{resolve_one_to_many, LexiconTriple, LutSet};
use crate::zoneseg::{split_zones, LowerTemplate, Placed, ZoneSplit};

pub const DEFAULT_NBEST: usize = 5;
/// Cap on associated words per hypothesis.
pub const ASSOCIATION_CAP: usize = 256;

/// Unit-cost edit distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = (diag + usize::from(x != y)).min(up + 1).min(row[j] + 1);
            diag = up;
        }
    }
    row[b.len()]
}

/// Closest lexicon entry to any candidate: `(index, distance)`, ties to
/// the earlier lexicon entry. An empty candidate list ranks `fallback`.
pub fn lexicon_rank(candidates: &[Vec<char>], lexicon: &[Vec<char>], fallback: &[char]) -> Result<(usize, usize)> {
    if lexicon.is_empty() {
        return Err(Error::EmptyLexicon);
    }
    let fallback = [fallback.to_vec()];
    let cands = if candidates.is_empty() { &fallback[..] } else { candidates };
    let mut best = (0, usize::MAX);
    for (i, w) in lexicon.iter().enumerate() {
        let d = cands.iter().map(|c| levenshtein(c, w)).min().unwrap_or(usize::MAX);
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best)
}

/// A modifier seen in the image with its candidate target labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedModifier {
    pub zone: Zone,
    /// Target labels, most likely first. Never empty.
    pub labels: Vec<char>,
    pub x_range: (usize, usize),
    pub center_x: f64,
}

/// Inclusive image column range of each aligned character.
pub fn char_x_ranges(alignment: &Alignment, geometry: WindowGeometry, x_offset: usize) -> Vec<(usize, usize)> {
    alignment
        .spans
        .iter()
        .map(|&(f, l)| {
            let (a, b) = geometry.frame_span_to_x(f, l);
            (x_offset + a, x_offset + b - 1)
        })
        .collect()
}

/// Character containing `x`, or the one with the nearest center.
pub fn host_index(ranges: &[(usize, usize)], x: f64) -> usize {
    if let Some(i) = ranges.iter().position(|&(a, b)| x >= a as f64 && x <= b as f64 + 1.0) {
        return i;
    }
    let mut best = (0, f64::INFINITY);
    for (i, &(a, b)) in ranges.iter().enumerate() {
        let d = ((a + b) as f64 / 2.0 - x).max(x - (a + b) as f64 / 2.0);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// Candidate target words for a middle-zone sequence and observed
/// modifiers. Each modifier attaches to its host character or a neighbor,
/// with every candidate label. The all-strict, top-label word comes first.
pub fn associate_modifiers(
    ranges: &[(usize, usize)],
    modifiers: &[ObservedModifier],
    middle: &[char],
) -> Vec<Decomposed> {
    let n = middle.len().min(ranges.len());
    if n == 0 || modifiers.is_empty() {
        return vec![Decomposed {
            middle: middle.to_vec(),
            layout: Vec::new(),
        }];
    }
    let mut options: Vec<Vec<ModifierSlot>> = Vec::with_capacity(modifiers.len());
    let mut total = 1usize;
    for m in modifiers {
        let host = host_index(&ranges[..n], m.center_x);
        let mut places = vec![host];
        if host > 0 {
            places.push(host - 1);
        }
        if host + 1 < n {
            places.push(host + 1);
        }
        let mut opts: Vec<ModifierSlot> = Vec::new();
        for &label in &m.labels {
            for &base_index in &places {
                opts.push(ModifierSlot {
                    zone: m.zone,
                    label,
                    base_index,
                });
            }
        }
        if total.saturating_mul(opts.len()) > ASSOCIATION_CAP {
            opts.truncate(1);
        }
        total *= opts.len();
        options.push(opts);
    }
    let mut out = Vec::with_capacity(total);
    let mut seen = BTreeSet::new();
    let mut idx = vec![0usize; options.len()];
    loop {
        let mut layout: Vec<ModifierSlot> = idx.iter().zip(&options).map(|(&i, o)| o[i]).collect();
        layout.sort_by_key(|s| (s.base_index, s.zone));
        let d = Decomposed {
            middle: middle.to_vec(),
            layout,
        };
        if seen.insert(d.canonical()) {
            out.push(d);
        }
        let mut p = options.len();
        let mut done = true;
        while p > 0 {
            p -= 1;
            idx[p] += 1;
            if idx[p] < options[p].len() {
                done = false;
                break;
            }
            idx[p] = 0;
        }
        if done {
            break;
        }
    }
    out
}

/// Classifies segmented modifiers with the source models and maps each
/// back to its target label alternatives. Without a source model for a
/// zone, lower components fall back to their template label.
pub fn observe_modifiers(split: &ZoneSplit, models: &ModifierModels, luts: &LutSet) -> Result<Vec<ObservedModifier>> {
    let mut out = Vec::new();
    for (zone, placed) in [(Zone::Upper, &split.upper), (Zone::Lower, &split.lower)] {
        for p in placed.iter() {
            if let Some(labels) = modifier_labels(models, luts, zone, p)? {
                out.push(ObservedModifier {
                    zone,
                    labels,
                    x_range: p.x_range,
                    center_x: p.component.centroid().0,
                });
            }
        }
    }
    Ok(out)
}

fn modifier_labels(models: &ModifierModels, luts: &LutSet, zone: Zone, p: &Placed) -> Result<Option<Vec<char>>> {
    match (models.zone(zone), luts.zone(zone)) {
        (Some(model), Some(lut)) => {
            let source = model.classify_component(&p.component)?.label;
            let labels = lut.inverse(source);
            Ok(if labels.is_empty() { None } else { Some(labels) })
        }
        _ => Ok(p.matched.map(|c| vec![c])),
    }
}

/// Modifier classifiers trained on the source script.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModifierModels {
    pub upper: Option<SvmModel>,
    pub lower: Option<SvmModel>,
}

impl ModifierModels {
    pub fn zone(&self, zone: Zone) -> Option<&SvmModel> {
        match zone {
            Zone::Upper => self.upper.as_ref(),
            Zone::Lower => self.lower.as_ref(),
            Zone::Middle => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub word: String,
    pub lexicon_index: usize,
    pub distance: usize,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecognitionResult {
    /// Ranked by (distance, −log-likelihood, lexicon index).
    pub candidates: Vec<Candidate>,
    pub alignment: Alignment,
    /// Modifier placement of the candidate word that won.
    pub modifiers: Vec<ModifierSlot>,
}

impl RecognitionResult {
    pub fn chosen(&self) -> &str {
        &self.candidates[0].word
    }

    pub fn ranked_words(&self) -> Vec<String> {
        self.candidates.iter().map(|c| c.word.clone()).collect()
    }
}

/// Everything needed to read target words with source models.
#[derive(Debug, Clone)]
pub struct Recognizer {
    pub source: HmmSet,
    pub modifiers: ModifierModels,
    pub luts: LutSet,
    pub triple: LexiconTriple,
    pub templates: Vec<LowerTemplate>,
    pub nbest: usize,
    forms: Vec<WordModel>,
    canonical: Vec<Vec<char>>,
}

impl Recognizer {
    /// `triple` must already carry its source-mapped forms.
    pub fn new(
        source: HmmSet,
        modifiers: ModifierModels,
        luts: LutSet,
        triple: LexiconTriple,
        templates: Vec<LowerTemplate>,
        nbest: usize,
    ) -> Result<Self> {
        if triple.is_empty() {
            return Err(Error::EmptyLexicon);
        }
        if nbest == 0 {
            return Err(Error::InvalidArgument("n-best size 0".into()));
        }
        let mut forms = Vec::new();
        let mut listed = BTreeSet::new();
        for s in &triple.source {
            if listed.insert(s.clone()) {
                forms.push(source.word_model(s)?);
            }
        }
        let canonical = (0..triple.len()).map(|i| triple.canonical(i)).collect();
        Ok(Recognizer {
            source,
            modifiers,
            luts,
            triple,
            templates,
            nbest,
            forms,
            canonical,
        })
    }

    /// Deduplicated source-mapped lexicon used for decoding.
    pub fn source_forms(&self) -> &[WordModel] {
        &self.forms
    }

    pub fn observe_modifiers(&self, split: &ZoneSplit) -> Result<Vec<ObservedModifier>> {
        observe_modifiers(split, &self.modifiers, &self.luts)
    }

    /// Middle-zone N-best over the deduplicated source forms.
    pub fn decode_middle(&self, split: &ZoneSplit) -> Result<Vec<(Vec<char>, Alignment)>> {
        let g = self.source.geometry;
        let seq = window_features(&split.middle, g.width, g.shift)?;
        let table = self.source.emissions(&seq.frames)?;
        let nbest = decode_nbest(&table, &self.source, &self.forms, self.nbest)?;
        Ok(nbest
            .into_iter()
            .map(|e| (self.forms[e.index].chars.clone(), e.alignment))
            .collect())
    }

    pub fn recognize(&self, img: &GrayImage) -> Result<RecognitionResult> {
        let split = split_zones(img, &self.templates)?;
        self.recognize_split(&split)
    }

    pub fn recognize_split(&self, split: &ZoneSplit) -> Result<RecognitionResult> {
        let hyps = self.decode_middle(split)?;
        let observed = self.observe_modifiers(split)?;
        // best (distance, ll, hypothesis, layout) per lexicon entry
        let mut best: BTreeMap<usize, (usize, f64, usize, Vec<ModifierSlot>)> = BTreeMap::new();
        for (h, (form, alignment)) in hyps.iter().enumerate() {
            let ranges = char_x_ranges(alignment, self.source.geometry, split.x_offset);
            let mut middles = resolve_one_to_many(form, &self.luts.middle, &self.triple);
            if middles.is_empty() {
                middles = self
                    .triple
                    .source
                    .iter()
                    .zip(&self.triple.middle)
                    .filter(|(s, _)| *s == form)
                    .map(|(_, m)| m.clone())
                    .collect();
                middles.dedup();
            }
            for middle in &middles {
                let words = associate_modifiers(&ranges, &observed, middle);
                let spelled: Vec<Vec<char>> = words.iter().map(Decomposed::canonical).collect();
                for (i, lex) in self.canonical.iter().enumerate() {
                    let Some((k, d)) = spelled.iter().enumerate().map(|(k, c)| (k, levenshtein(c, lex))).min_by_key(|&(k, d)| (d, k)) else {
                        continue;
                    };
                    let ll = alignment.log_likelihood;
                    let better = best.get(&i).is_none_or(|b| d < b.0 || (d == b.0 && ll > b.1));
                    if better {
                        best.insert(i, (d, ll, h, words[k].layout.clone()));
                    }
                }
            }
        }
        let mut ranked: Vec<(usize, (usize, f64, usize, Vec<ModifierSlot>))> = best.into_iter().collect();
        ranked.sort_by(|a, b| {
            a.1 .0
                .cmp(&b.1 .0)
                .then(b.1 .1.partial_cmp(&a.1 .1).unwrap_or(core::cmp::Ordering::Equal))
                .then(a.0.cmp(&b.0))
        });
        ranked.truncate(self.nbest);
        let (_, (_, _, h, layout)) = ranked.first().cloned().ok_or(Error::NoFeasibleEntry)?;
        Ok(RecognitionResult {
            candidates: ranked
                .into_iter()
                .map(|(i, (d, ll, _, _))| Candidate {
                    word: self.triple.words[i].clone(),
                    lexicon_index: i,
                    distance: d,
                    log_likelihood: ll,
                })
                .collect(),
            alignment: hyps[h].1.clone(),
            modifiers: layout,
        })
    }
}

/// Top-1 and top-5 exact-match accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecognitionMetrics {
    pub top1: f64,
    pub top5: f64,
}

/// Accuracy of index-aligned ranked lists against gold items.
pub fn evaluate_ranked<T: PartialEq>(ranked: &[Vec<T>], gold: &[T]) -> Result<RecognitionMetrics> {
    if ranked.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: ranked.len(),
            right: gold.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::NoData("no recognition results".into()));
    }
    let (mut t1, mut t5) = (0usize, 0usize);
    for (r, g) in ranked.iter().zip(gold) {
        if r.first() == Some(g) {
            t1 += 1;
        }
        if r.iter().take(5).any(|w| w == g) {
            t5 += 1;
        }
    }
    let n = gold.len() as f64;
    Ok(RecognitionMetrics {
        top1: t1 as f64 / n,
        top5: t5 as f64 / n,
    })
}

pub fn evaluate_recognition(results: &[RecognitionResult], gold: &[String]) -> Result<RecognitionMetrics> {
    let ranked: Vec<Vec<String>> = results.iter().map(RecognitionResult::ranked_words).collect();
    evaluate_ranked(&ranked, gold)
}

/// Pairs segmented modifier components with their ground-truth labels.
///
/// A component takes the label of the same-zone truth modifier whose drawn
/// columns overlap it most; components overlapping none are dropped.
pub fn label_modifiers(split: &ZoneSplit, truth: &GroundTruth) -> Vec<(Zone, char, Component)> {
    let mut out = Vec::new();
    for (zone, placed) in [(Zone::Upper, &split.upper), (Zone::Lower, &split.lower)] {
        for p in placed.iter() {
            let best = truth
                .modifiers
                .iter()
                .filter(|m| m.zone == zone)
                .map(|m| {
                    let lo = m.x_range.0.max(p.x_range.0);
                    let hi = m.x_range.1.min(p.x_range.1);
                    (if hi >= lo { hi - lo + 1 } else { 0 }, m.label)
                })
                .filter(|&(o, _)| o > 0)
                .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
            if let Some((_, label)) = best {
                out.push((zone, label, p.component.clone()));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    #[test]
    fn edit_distance_basics() {
        assert_eq!(levenshtein(&chars("kitten"), &chars("sitting")), 3);
        assert_eq!(levenshtein(&chars(""), &chars("abc")), 3);
        assert_eq!(levenshtein(&chars("abc"), &chars("abc")), 0);
    }

    #[test]
    fn rank_against_lexicon() {
        let lex = vec![chars("abc"), chars("xyz")];
        assert_eq!(lexicon_rank(&[chars("abd")], &lex, &[]).unwrap(), (0, 1));
        assert_eq!(lexicon_rank(&[chars("xyz")], &lex, &[]).unwrap(), (1, 0));
        assert_eq!(lexicon_rank(&[], &lex, &chars("xy")).unwrap(), (1, 1));
        assert_eq!(lexicon_rank(&[chars("a")], &[], &[]), Err(Error::EmptyLexicon));
    }

    fn modifier(x: f64) -> ObservedModifier {
        ObservedModifier {
            zone: Zone::Upper,
            labels: vec!['^'],
            x_range: (x as usize, x as usize),
            center_x: x,
        }
    }

    const RANGES: [(usize, usize); 3] = [(0, 9), (10, 19), (20, 29)];

    #[test]
    fn flexible_association() {
        let mid = chars("abc");
        assert_eq!(associate_modifiers(&RANGES, &[], &mid).len(), 1);
        let mid_mod = associate_modifiers(&RANGES, &[modifier(15.0)], &mid);
        assert_eq!(mid_mod.len(), 3);
        assert_eq!(mid_mod[0].layout[0].base_index, 1);
        assert_eq!(associate_modifiers(&RANGES, &[modifier(2.0)], &mid).len(), 2);
    }

    #[test]
    fn association_is_capped() {
        let mid = chars("abcdefghij");
        let ranges: Vec<(usize, usize)> = (0..10).map(|i| (i * 10, i * 10 + 9)).collect();
        let mods: Vec<ObservedModifier> = (0..8).map(|i| modifier(i as f64 * 10.0 + 15.0)).collect();
        let out = associate_modifiers(&ranges, &mods, &mid);
        assert!(out.len() <= ASSOCIATION_CAP);
        let strict: Vec<usize> = out[0].layout.iter().map(|s| s.base_index).collect();
        assert_eq!(strict, (1..9).collect::<Vec<_>>());
    }

    #[test]
    fn metrics_from_ranks() {
        let ranked = vec![vec!['a', 'b'], vec!['x', 'y', 'c'], vec!['q']];
        let m = evaluate_ranked(&ranked, &['a', 'c', 'z']).unwrap();
        assert_eq!(m.top1, 1.0 / 3.0);
        assert_eq!(m.top5, 2.0 / 3.0);
        assert!(evaluate_ranked(&ranked, &['a']).is_err());
    }
}
