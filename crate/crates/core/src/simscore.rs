//! Entropy-based script similarity.
//!
//! Each target character's samples are read with the source models; the
//! entropy of the resulting vote histogram measures how ambiguously the
//! character maps. A weighted aggregate over characters gives the script
//! similarity, and its ratio to the target's self-similarity is the
//! relative index reported to users.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ghmm::HmmSet;
use crate::math;
use crate::phog::PhogVector;
use crate::xmap::isolated_decode;

/// Tolerance on the weight sum.
pub const WEIGHT_TOLERANCE: f64 = 1e-6;

/// Shannon entropy in bits of a count table. Zero counts contribute 0.
pub fn entropy(counts: &[usize]) -> Result<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::NoData("all-zero counts".into()));
    }
    let n = total as f64;
    let mut h = 0.0;
    for &c in counts.iter().filter(|&&c| c > 0) {
        let p = c as f64 / n;
        h -= p * math::log2(p);
    }
    // a single nonzero count gives -0.0
    Ok(h.max(0.0))
}

/// Entropy scaled by `1 + log2 K`, K the number of distinct source labels.
pub fn normalized_entropy(h: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("K = 0".into()));
    }
    let max = math::log2(k as f64);
    if !(h >= 0.0) || h > max + 1e-12 {
        return Err(Error::OutOfRange(h));
    }
    Ok(h / (1.0 + max))
}

pub fn char_similarity(hn: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&hn) {
        return Err(Error::OutOfRange(hn));
    }
    Ok(1.0 - hn)
}

/// `(1 − Σ hn_i·w_i) / M`.
pub fn script_similarity(hn: &[f64], weights: &[f64]) -> Result<f64> {
    if hn.len() != weights.len() {
        return Err(Error::LengthMismatch {
            left: hn.len(),
            right: weights.len(),
        });
    }
    if hn.is_empty() {
        return Err(Error::NoData("no characters".into()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(Error::WeightSum(sum));
    }
    let weighted: f64 = hn.iter().zip(weights).map(|(h, w)| h * w).sum();
    Ok((1.0 - weighted) / hn.len() as f64)
}

pub fn relative_similarity(cross: f64, reference: f64) -> Result<f64> {
    if reference == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(cross / reference)
}

/// Votes of the source models over one target character's samples.
pub fn recognition_histogram(samples: &[Vec<PhogVector>], source: &HmmSet) -> Result<BTreeMap<char, usize>> {
    if samples.is_empty() {
        return Err(Error::NoData("no samples".into()));
    }
    let mut hist = BTreeMap::new();
    for s in samples {
        *hist.entry(isolated_decode(source, s)?.label).or_default() += 1;
    }
    Ok(hist)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyRecord {
    pub target: char,
    pub counts: BTreeMap<char, usize>,
    pub k: usize,
    pub entropy: f64,
    pub normalized: f64,
    pub similarity: f64,
}

impl EntropyRecord {
    pub fn from_counts(target: char, counts: BTreeMap<char, usize>) -> Result<Self> {
        let values: Vec<usize> = counts.values().copied().collect();
        let h = entropy(&values)?;
        let k = values.iter().filter(|&&c| c > 0).count();
        let hn = normalized_entropy(h, k)?;
        Ok(EntropyRecord {
            target,
            counts,
            k,
            entropy: h,
            normalized: hn,
            similarity: char_similarity(hn)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityReport {
    pub records: Vec<EntropyRecord>,
    pub weights: Vec<f64>,
    pub similarity: f64,
    /// Self-similarity of the target, when a reference was given.
    pub reference: Option<f64>,
    pub relative: Option<f64>,
}

impl SimilarityReport {
    pub fn m(&self) -> usize {
        self.records.len()
    }
}

/// Relative frequencies of characters, in character order.
pub fn frequency_weights(counts: &BTreeMap<char, usize>) -> Result<BTreeMap<char, f64>> {
    let total: usize = counts.values().sum();
    if total == 0 {
        return Err(Error::NoData("no character occurrences".into()));
    }
    Ok(counts.iter().map(|(&c, &n)| (c, n as f64 / total as f64)).collect())
}

/// Similarity from per-character histograms and weights.
pub fn similarity_from_histograms(
    histograms: &BTreeMap<char, BTreeMap<char, usize>>,
    weights: &BTreeMap<char, f64>,
) -> Result<(Vec<EntropyRecord>, Vec<f64>, f64)> {
    let missing: Vec<char> = weights
        .keys()
        .filter(|c| !histograms.contains_key(c))
        .chain(histograms.keys().filter(|c| !weights.contains_key(c)))
        .copied()
        .collect();
    if !missing.is_empty() {
        let mut m = missing;
        m.sort_unstable();
        m.dedup();
        return Err(Error::MissingCoverage(m));
    }
    let records = histograms
        .iter()
        .map(|(&c, h)| EntropyRecord::from_counts(c, h.clone()))
        .collect::<Result<Vec<_>>>()?;
    let w: Vec<f64> = records.iter().map(|r| weights[&r.target]).collect();
    let hn: Vec<f64> = records.iter().map(|r| r.normalized).collect();
    let s = script_similarity(&hn, &w)?;
    Ok((records, w, s))
}

pub fn histograms(
    samples: &BTreeMap<char, Vec<Vec<PhogVector>>>,
    source: &HmmSet,
) -> Result<BTreeMap<char, BTreeMap<char, usize>>> {
    samples
        .iter()
        .map(|(&c, s)| {
            if s.is_empty() {
                return Err(Error::MissingCoverage(alloc::vec![c]));
            }
            Ok((c, recognition_histogram(s, source)?))
        })
        .collect()
}

/// Similarity of the target samples under `source`, made relative to the
/// target's own models when `reference` is given.
pub fn run_similarity(
    source: &HmmSet,
    samples: &BTreeMap<char, Vec<Vec<PhogVector>>>,
    weights: &BTreeMap<char, f64>,
    reference: Option<&HmmSet>,
) -> Result<SimilarityReport> {
    let (records, w, s) = similarity_from_histograms(&histograms(samples, source)?, weights)?;
    let (reference, relative) = match reference {
        Some(r) => {
            let (_, _, rs) = similarity_from_histograms(&histograms(samples, r)?, weights)?;
            (Some(rs), Some(relative_similarity(s, rs)?))
        }
        None => (None, None),
    };
    Ok(SimilarityReport {
        records,
        weights: w,
        similarity: s,
        reference,
        relative,
    })
}

/// Pairwise relative similarity: rows are targets, columns sources.
pub fn similarity_matrix(
    scripts: &[(&HmmSet, &BTreeMap<char, Vec<Vec<PhogVector>>>, &BTreeMap<char, f64>)],
) -> Result<Vec<Vec<f64>>> {
    if scripts.len() < 2 {
        return Err(Error::InvalidArgument("need at least two scripts".into()));
    }
    let mut out = Vec::with_capacity(scripts.len());
    for (t, &(own, samples, weights)) in scripts.iter().enumerate() {
        let (_, _, reference) = similarity_from_histograms(&histograms(samples, own)?, weights)?;
        let mut row = Vec::with_capacity(scripts.len());
        for (s, &(source, _, _)) in scripts.iter().enumerate() {
            let v = if s == t {
                relative_similarity(reference, reference)?
            } else {
                let (_, _, cross) = similarity_from_histograms(&histograms(samples, source)?, weights)?;
                relative_similarity(cross, reference)?
            };
            row.push(v);
        }
        out.push(row);
    }
    Ok(out)
}
