//! Target-to-source character look-up tables built by majority voting, and
//! the lexicon translations that use them.
//!
//! A LUT maps each target character of one zone to the source character
//! that won most of its sample recognitions. Vote ties go to the higher mean
//! recognizer score, then to the lower source label.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::alphabet::{DecompTable, ModifierSlot, Zone};
use crate::error::{Error, Result};
use crate::ghmm::{viterbi_table, HmmSet};
use crate::phog::PhogVector;
use crate::raster::Component;
use crate::rbfsvm::SvmModel;

/// Cap on enumerated target words per source sequence.
pub const EXPANSION_CAP: usize = 10_000;

/// One recognition of one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vote {
    pub label: char,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LutEntry {
    pub source: char,
    pub histogram: BTreeMap<char, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lut {
    pub zone: Zone,
    entries: BTreeMap<char, LutEntry>,
}

/// One LUT per zone. Modifier LUTs are absent for scripts without that zone.
#[derive(Debug, Clone, PartialEq)]
pub struct LutSet {
    pub middle: Lut,
    pub upper: Option<Lut>,
    pub lower: Option<Lut>,
}

impl LutSet {
    pub fn zone(&self, zone: Zone) -> Option<&Lut> {
        match zone {
            Zone::Middle => Some(&self.middle),
            Zone::Upper => self.upper.as_ref(),
            Zone::Lower => self.lower.as_ref(),
        }
    }
}

/// Majority vote with the tie rule; `None` for an empty vote list.
pub fn majority(votes: &[Vote]) -> Option<(char, BTreeMap<char, usize>)> {
    let mut hist: BTreeMap<char, usize> = BTreeMap::new();
    let mut sums: BTreeMap<char, f64> = BTreeMap::new();
    for v in votes {
        *hist.entry(v.label).or_default() += 1;
        *sums.entry(v.label).or_default() += v.score;
    }
    let mut best: Option<(char, usize, f64)> = None;
    // BTreeMap order: lower labels are seen first and win full ties
    for (&label, &count) in &hist {
        let mean = sums[&label] / count as f64;
        let better = match best {
            None => true,
            Some((_, c, m)) => count > c || (count == c && mean > m),
        };
        if better {
            best = Some((label, count, mean));
        }
    }
    best.map(|(label, _, _)| (label, hist))
}

impl Lut {
    pub fn new(zone: Zone) -> Self {
        Lut {
            zone,
            entries: BTreeMap::new(),
        }
    }

    pub fn identity(zone: Zone, chars: &[char]) -> Self {
        let mut lut = Lut::new(zone);
        for &c in chars {
            lut.insert(c, c, BTreeMap::from([(c, 1)]));
        }
        lut
    }

    /// Builds a LUT from per-target vote lists.
    pub fn from_votes(zone: Zone, votes: &BTreeMap<char, Vec<Vote>>) -> Result<Self> {
        let mut lut = Lut::new(zone);
        for (&target, list) in votes {
            let (source, hist) = majority(list).ok_or_else(|| Error::MissingCoverage(vec![target]))?;
            lut.insert(target, source, hist);
        }
        Ok(lut)
    }

    pub fn insert(&mut self, target: char, source: char, histogram: BTreeMap<char, usize>) {
        self.entries.insert(target, LutEntry { source, histogram });
    }

    pub fn get(&self, target: char) -> Option<char> {
        self.entries.get(&target).map(|e| e.source)
    }

    pub fn entry(&self, target: char) -> Option<&LutEntry> {
        self.entries.get(&target)
    }

    pub fn iter(&self) -> impl Iterator<Item = (char, &LutEntry)> {
        self.entries.iter().map(|(&c, e)| (c, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Target characters mapped to `source`, most source votes first, then
    /// label order.
    pub fn inverse(&self, source: char) -> Vec<char> {
        let mut out: Vec<(usize, char)> = self
            .entries
            .iter()
            .filter(|(_, e)| e.source == source)
            .map(|(&t, e)| (e.histogram.get(&source).copied().unwrap_or(0), t))
            .collect();
        out.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        out.into_iter().map(|(_, t)| t).collect()
    }

    pub fn map_sequence(&self, chars: &[char]) -> Result<Vec<char>> {
        let mut missing: Vec<char> = chars.iter().copied().filter(|&c| self.get(c).is_none()).collect();
        if !missing.is_empty() {
            missing.sort_unstable();
            missing.dedup();
            return Err(Error::Unmapped(missing));
        }
        Ok(chars.iter().map(|&c| self.get(c).expect("checked")).collect())
    }
}

/// Isolated-character recognition: the best single-character model for
/// `frames`, scored by Viterbi log-likelihood (ties to the lower label).
pub fn isolated_decode(set: &HmmSet, frames: &[PhogVector]) -> Result<Vote> {
    let table = set.emissions(frames)?;
    let mut best: Option<Vote> = None;
    for c in set.chars() {
        let word = set.word_model(&[c])?;
        match viterbi_table(&table, set, &word) {
            Ok(al) => {
                if best.is_none_or(|b| al.log_likelihood > b.score) {
                    best = Some(Vote {
                        label: c,
                        score: al.log_likelihood,
                    });
                }
            }
            Err(Error::TooFewFrames { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    best.ok_or(Error::NoFeasibleEntry)
}

pub fn modifier_vote(model: &SvmModel, comp: &Component) -> Result<Vote> {
    let c = model.classify_component(comp)?;
    Ok(Vote {
        label: c.label,
        score: c.confidence,
    })
}

/// Middle-zone LUT: every sample is decoded as an isolated source character.
pub fn build_lut_middle(source: &HmmSet, samples: &BTreeMap<char, Vec<Vec<PhogVector>>>) -> Result<Lut> {
    let mut votes = BTreeMap::new();
    for (&target, list) in samples {
        if list.is_empty() {
            return Err(Error::MissingCoverage(vec![target]));
        }
        let v = list.iter().map(|f| isolated_decode(source, f)).collect::<Result<Vec<_>>>()?;
        votes.insert(target, v);
    }
    Lut::from_votes(Zone::Middle, &votes)
}

/// Modifier LUT for `zone`: every sample component is classified by the
/// source modifier SVM.
pub fn build_lut_modifier(source: &SvmModel, zone: Zone, samples: &BTreeMap<char, Vec<Component>>) -> Result<Lut> {
    if zone == Zone::Middle {
        return Err(Error::InvalidZone(zone));
    }
    let mut votes = BTreeMap::new();
    for (&target, list) in samples {
        if list.is_empty() {
            return Err(Error::MissingCoverage(vec![target]));
        }
        let v = list.iter().map(|c| modifier_vote(source, c)).collect::<Result<Vec<_>>>()?;
        votes.insert(target, v);
    }
    Lut::from_votes(zone, &votes)
}

/// Target lexicon, its middle-zone reduction, the source-mapped reduction
/// and each word's modifier layout, index-aligned.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LexiconTriple {
    pub words: Vec<String>,
    pub middle: Vec<Vec<char>>,
    pub source: Vec<Vec<char>>,
    pub layouts: Vec<Vec<ModifierSlot>>,
}

impl LexiconTriple {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Zone-wise canonical spelling of entry `i`.
    pub fn canonical(&self, i: usize) -> Vec<char> {
        crate::alphabet::Decomposed {
            middle: self.middle[i].clone(),
            layout: self.layouts[i].clone(),
        }
        .canonical()
    }
}

pub fn make_mid_lexicon(words: &[String], table: &DecompTable) -> Result<LexiconTriple> {
    let mut t = LexiconTriple::default();
    for w in words {
        let d = table.decompose(w)?;
        t.words.push(w.clone());
        t.middle.push(d.middle);
        t.layouts.push(d.layout);
        t.source.push(Vec::new());
    }
    Ok(t)
}

pub fn map_lexicon(triple: &LexiconTriple, lut: &Lut) -> Result<LexiconTriple> {
    let mut missing = BTreeSet::new();
    for m in &triple.middle {
        missing.extend(m.iter().copied().filter(|&c| lut.get(c).is_none()));
    }
    if !missing.is_empty() {
        return Err(Error::Unmapped(missing.into_iter().collect()));
    }
    let mut out = triple.clone();
    out.source = triple
        .middle
        .iter()
        .map(|m| lut.map_sequence(m))
        .collect::<Result<_>>()?;
    Ok(out)
}

/// Target middle forms present in the lexicon that map onto `source` by
/// per-position inverse substitution, in lexicon order.
///
/// The substitution product is enumerated up to [`EXPANSION_CAP`]; beyond
/// it the positions with the most alternatives are pinned, one at a time, to
/// their most-voted target character.
pub fn resolve_one_to_many(source: &[char], lut: &Lut, triple: &LexiconTriple) -> Vec<Vec<char>> {
    let mut options: Vec<Vec<char>> = source.iter().map(|&s| lut.inverse(s)).collect();
    if options.iter().any(Vec::is_empty) || options.is_empty() {
        return Vec::new();
    }
    let product = |opts: &[Vec<char>]| {
        opts.iter()
            .try_fold(1usize, |acc, o| acc.checked_mul(o.len()))
            .unwrap_or(usize::MAX)
    };
    while product(&options) > EXPANSION_CAP {
        let widest = (0..options.len())
            .max_by(|&a, &b| options[a].len().cmp(&options[b].len()).then(b.cmp(&a)))
            .expect("non-empty");
        options[widest].truncate(1);
    }
    let mut expansions: BTreeSet<Vec<char>> = BTreeSet::new();
    let mut idx = vec![0usize; options.len()];
    loop {
        expansions.insert(idx.iter().zip(&options).map(|(&i, o)| o[i]).collect());
        let mut p = options.len();
        loop {
            if p == 0 {
                break;
            }
            p -= 1;
            idx[p] += 1;
            if idx[p] < options[p].len() {
                break;
            }
            idx[p] = 0;
            if p == 0 {
                p = usize::MAX;
                break;
            }
        }
        if p == usize::MAX {
            break;
        }
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for m in &triple.middle {
        if expansions.contains(m) && seen.insert(m.clone()) {
            out.push(m.clone());
        }
    }
    out
}
