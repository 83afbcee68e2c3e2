//! Batch stages shared by the commands and the evaluation suites. Work is
//! spread over the rayon pool; every result is collected in input order, so
//! outputs do not depend on the number of workers.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use xlhwr_core::alphabet::{DecompTable, Zone};
use xlhwr_core::ghmm::{accumulate, baum_welch_with, flat_start, Accumulator, Alignment, HmmSet, TrainConfig, TrainOutcome};
use xlhwr_core::phog::{modifier_features, window_features, PhogVector, WindowGeometry};
use xlhwr_core::raster::{binarize, Component};
use xlhwr_core::rbfsvm::{pair_jobs, train_pair, FeatureScale, SvmModel, SvmParams};
use xlhwr_core::simscore::{similarity_from_histograms, relative_similarity, EntropyRecord};
use xlhwr_core::synthscript::{modifier_templates, RenderStyle, SyntheticScript};
use xlhwr_core::wordrec::{
    char_x_ranges, evaluate_recognition, label_modifiers, observe_modifiers, ModifierModels, RecognitionMetrics,
    RecognitionResult, Recognizer,
};
use xlhwr_core::wordspot::{
    demote_unverified, filler_score, sort_hits, spot_score_with, KeywordQuery, RankedList, RerankMode, SpotHit,
};
use xlhwr_core::xmap::{isolated_decode, make_mid_lexicon, map_lexicon, modifier_vote, Lut, LutSet, Vote};
use xlhwr_core::zoneseg::{split_zones, LowerTemplate, ZoneSplit};

use crate::dataset::Sample;
use crate::error::{CliError, CliResult};
use crate::{pgm, text};

/// Style variants per lower modifier in the segmentation templates.
pub const TEMPLATE_VARIANTS: usize = 8;
const TEMPLATE_SEED: u64 = 3;

pub fn lower_templates(script: &SyntheticScript) -> CliResult<Vec<LowerTemplate>> {
    if script.lower.is_empty() {
        return Ok(Vec::new());
    }
    Ok(
        modifier_templates(script, Zone::Lower, TEMPLATE_VARIANTS, &RenderStyle::default(), TEMPLATE_SEED)?
            .into_iter()
            .map(|(label, shape)| LowerTemplate { label, shape })
            .collect(),
    )
}

/// Loads lower-zone templates from a directory of PGM files, one per
/// label; the file stem is the label (a single character or `U+XXXX`).
pub fn load_template_dir(dir: &Path) -> CliResult<Vec<LowerTemplate>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths = Vec::new();
    for e in entries {
        let p = e.map_err(|e| CliError::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x == "pgm") {
            paths.push(p);
        }
    }
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let label = text::parse_char(stem)
            .ok_or_else(|| CliError::Data(format!("{}: file stem is not a single label", p.display())))?;
        let shape = binarize(&pgm::load(&p)?);
        if shape.ink_count() == 0 {
            return Err(CliError::Data(format!("{}: template has no ink", p.display())));
        }
        out.push(LowerTemplate { label, shape });
    }
    Ok(out)
}

/// A segmented image with its middle-zone frames.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: ZoneSplit,
    pub frames: Vec<PhogVector>,
}

pub fn prepare(samples: &[Sample], templates: &[LowerTemplate], geometry: WindowGeometry) -> CliResult<Vec<Prepared>> {
    samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let split = split_zones(&s.image, templates).map_err(|e| CliError::Data(format!("image {i} ({}): {e}", s.word)))?;
            let frames = window_features(&split.middle, geometry.width, geometry.shift)?.frames;
            Ok(Prepared { split, frames })
        })
        .collect()
}

/// `(frames, middle-zone transcription)` per sample.
pub fn middle_pairs(prepared: &[Prepared], samples: &[Sample], table: &DecompTable) -> CliResult<Vec<(Vec<PhogVector>, Vec<char>)>> {
    prepared
        .iter()
        .zip(samples)
        .map(|(p, s)| Ok((p.frames.clone(), table.decompose(&s.word)?.middle)))
        .collect()
}

/// Flat start plus Baum-Welch with a parallel E-step. `log` sees each
/// iteration's data log-likelihood.
pub fn train_middle(
    script_id: &str,
    geometry: WindowGeometry,
    pairs: &[(Vec<PhogVector>, Vec<char>)],
    config: &TrainConfig,
    mut log: impl FnMut(usize, f64),
) -> CliResult<TrainOutcome> {
    if pairs.is_empty() {
        return Err(CliError::Data("no training samples".into()));
    }
    let refs: Vec<(&[PhogVector], &[char])> = pairs.iter().map(|(f, c)| (f.as_slice(), c.as_slice())).collect();
    let init = flat_start(script_id, geometry, &refs, config)?;
    let mut iter = 0;
    let out = baum_welch_with(&init, &refs, config.iterations, config.min_improvement, |set, chunks| {
        let parts = chunks
            .par_iter()
            .map(|c| accumulate(set, c))
            .collect::<xlhwr_core::Result<Vec<Accumulator>>>()?;
        let mut total = Accumulator::default();
        for p in parts {
            total.merge(p);
        }
        log(iter, total.log_likelihood);
        iter += 1;
        Ok(total)
    })?;
    Ok(out)
}

/// Segmented modifier components labelled from ground truth, per zone.
pub fn modifier_components(prepared: &[Prepared], samples: &[Sample]) -> BTreeMap<Zone, BTreeMap<char, Vec<Component>>> {
    let mut out: BTreeMap<Zone, BTreeMap<char, Vec<Component>>> = BTreeMap::new();
    for (p, s) in prepared.iter().zip(samples) {
        let Some(truth) = &s.truth else { continue };
        for (zone, label, comp) in label_modifiers(&p.split, truth) {
            out.entry(zone).or_default().entry(label).or_default().push(comp);
        }
    }
    out
}

pub fn component_features(comps: &BTreeMap<char, Vec<Component>>) -> CliResult<Vec<(PhogVector, char)>> {
    let jobs: Vec<(char, &Component)> = comps.iter().flat_map(|(&c, v)| v.iter().map(move |x| (c, x))).collect();
    jobs.par_iter()
        .map(|&(c, comp)| Ok((modifier_features(comp)?, c)))
        .collect()
}

/// One-vs-one SVM with the label pairs trained in parallel.
pub fn train_svm(data: &[(PhogVector, char)], params: &SvmParams) -> CliResult<SvmModel> {
    let (labels, pairs) = pair_jobs(data)?;
    let scale = FeatureScale::fit(data)?;
    let scaled = scale.apply_all(data);
    let machines = pairs
        .par_iter()
        .map(|&p| train_pair(&scaled, &labels, p, params))
        .collect::<xlhwr_core::Result<Vec<_>>>()?;
    Ok(SvmModel::from_parts(labels, machines, params.gamma, params.c, scale)?)
}

/// Frames of isolated single-base samples, keyed by that base.
pub fn isolated_middle_samples(prepared: &[Prepared], samples: &[Sample], table: &DecompTable) -> CliResult<BTreeMap<char, Vec<Vec<PhogVector>>>> {
    let mut out: BTreeMap<char, Vec<Vec<PhogVector>>> = BTreeMap::new();
    for (p, s) in prepared.iter().zip(samples) {
        let d = table.decompose(&s.word)?;
        if d.middle.len() == 1 && d.layout.is_empty() {
            out.entry(d.middle[0]).or_default().push(p.frames.clone());
        }
    }
    Ok(out)
}

/// Isolated-character decodes of every sample under `source`.
pub fn isolated_votes(source: &HmmSet, samples: &BTreeMap<char, Vec<Vec<PhogVector>>>) -> CliResult<BTreeMap<char, Vec<Vote>>> {
    let jobs: Vec<(char, &Vec<PhogVector>)> = samples.iter().flat_map(|(&c, v)| v.iter().map(move |f| (c, f))).collect();
    let votes = jobs
        .par_iter()
        .map(|&(c, f)| Ok((c, isolated_decode(source, f)?)))
        .collect::<CliResult<Vec<_>>>()?;
    let mut out: BTreeMap<char, Vec<Vote>> = BTreeMap::new();
    for (c, v) in votes {
        out.entry(c).or_default().push(v);
    }
    Ok(out)
}

pub fn histograms_from_votes(votes: &BTreeMap<char, Vec<Vote>>) -> BTreeMap<char, BTreeMap<char, usize>> {
    votes
        .iter()
        .map(|(&c, vs)| {
            let mut h = BTreeMap::new();
            for v in vs {
                *h.entry(v.label).or_insert(0) += 1;
            }
            (c, h)
        })
        .collect()
}

pub fn middle_lut(source: &HmmSet, samples: &BTreeMap<char, Vec<Vec<PhogVector>>>) -> CliResult<Lut> {
    Ok(Lut::from_votes(Zone::Middle, &isolated_votes(source, samples)?)?)
}

pub fn modifier_lut(source: &SvmModel, zone: Zone, comps: &BTreeMap<char, Vec<Component>>) -> CliResult<Lut> {
    let jobs: Vec<(char, &Component)> = comps.iter().flat_map(|(&c, v)| v.iter().map(move |x| (c, x))).collect();
    let votes = jobs
        .par_iter()
        .map(|&(c, comp)| Ok((c, modifier_vote(source, comp)?)))
        .collect::<CliResult<Vec<_>>>()?;
    let mut by: BTreeMap<char, Vec<Vote>> = BTreeMap::new();
    for (c, v) in votes {
        by.entry(c).or_default().push(v);
    }
    Ok(Lut::from_votes(zone, &by)?)
}

/// Identity LUTs for reading a script with its own models.
pub fn identity_luts(table: &DecompTable) -> LutSet {
    let opt = |z: Zone| {
        let c = table.zone_labels(z);
        (!c.is_empty()).then(|| Lut::identity(z, &c))
    };
    LutSet {
        middle: Lut::identity(Zone::Middle, &table.middle_chars()),
        upper: opt(Zone::Upper),
        lower: opt(Zone::Lower),
    }
}

/// A recognizer over `lexicon`, mapped through `luts`.
pub fn recognizer(
    source: HmmSet,
    modifiers: ModifierModels,
    luts: LutSet,
    lexicon: &[String],
    table: &DecompTable,
    templates: Vec<LowerTemplate>,
    nbest: usize,
) -> CliResult<Recognizer> {
    let triple = map_lexicon(&make_mid_lexicon(lexicon, table)?, &luts.middle)?;
    Ok(Recognizer::new(source, modifiers, luts, triple, templates, nbest)?)
}

pub fn recognize_all(rec: &Recognizer, prepared: &[Prepared]) -> CliResult<Vec<RecognitionResult>> {
    prepared
        .par_iter()
        .enumerate()
        .map(|(i, p)| rec.recognize_split(&p.split).map_err(|e| CliError::Data(format!("image {i}: {e}"))))
        .collect()
}

pub fn recognition_metrics(results: &[RecognitionResult], samples: &[Sample]) -> CliResult<RecognitionMetrics> {
    let gold: Vec<String> = samples.iter().map(|s| s.word.clone()).collect();
    Ok(evaluate_recognition(results, &gold)?)
}

/// Scores every keyword on every image. `out[k][i]` is keyword `k` on
/// image `i`; the filler score and modifier observations are computed once
/// per image.
pub fn spot_all(
    set: &HmmSet,
    modifiers: &ModifierModels,
    luts: &LutSet,
    queries: &[KeywordQuery],
    prepared: &[Prepared],
) -> CliResult<Vec<Vec<SpotHit>>> {
    let per_image = prepared
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let table = set.emissions(&p.frames)?;
            let filler = filler_score(&table, set)?;
            let observed = observe_modifiers(&p.split, modifiers, luts)?;
            queries
                .iter()
                .map(|q| {
                    let (score, spans) = spot_score_with(&table, filler, q, set)?;
                    let ranges = if spans.is_empty() {
                        Vec::new()
                    } else {
                        let al = Alignment {
                            spans,
                            log_likelihood: score.keyword,
                        };
                        char_x_ranges(&al, set.geometry, p.split.x_offset)
                    };
                    Ok(SpotHit {
                        image: i,
                        score,
                        observed: observed.clone(),
                        ranges,
                    })
                })
                .collect::<xlhwr_core::Result<Vec<_>>>()
        })
        .collect::<xlhwr_core::Result<Vec<_>>>()?;
    Ok((0..queries.len())
        .map(|k| per_image.iter().map(|row| row[k].clone()).collect())
        .collect())
}

/// Orders one keyword's hits, best first, optionally moving hits whose
/// modifiers disagree with the query behind the rest.
pub fn rank_hits(hits: &[SpotHit], query: &KeywordQuery, rerank: Option<RerankMode>) -> Vec<SpotHit> {
    match rerank {
        Some(mode) => demote_unverified(hits, query, mode),
        None => {
            let mut h = hits.to_vec();
            sort_hits(&mut h);
            h
        }
    }
}

/// Ranked relevance lists for retrieval metrics. An image is relevant when
/// its transcription equals the keyword; `accept` decides acceptance.
pub fn ranked_list(ranked: &[SpotHit], query: &KeywordQuery, words: &[String], accept: impl Fn(&SpotHit) -> bool) -> RankedList {
    RankedList {
        items: ranked.iter().map(|h| (words[h.image] == query.word, accept(h))).collect(),
        total_relevant: words.iter().filter(|w| **w == query.word).count(),
    }
}

/// Character weights from the relative sample counts of each character.
pub fn sample_weights(samples: &BTreeMap<char, Vec<Vec<PhogVector>>>) -> CliResult<BTreeMap<char, f64>> {
    let counts: BTreeMap<char, usize> = samples.iter().map(|(&c, v)| (c, v.len())).collect();
    Ok(xlhwr_core::simscore::frequency_weights(&counts)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Similarity {
    pub records: Vec<EntropyRecord>,
    pub weights: Vec<f64>,
    pub similarity: f64,
    pub reference: Option<f64>,
    pub relative: Option<f64>,
}

pub fn script_similarity(
    source: &HmmSet,
    samples: &BTreeMap<char, Vec<Vec<PhogVector>>>,
    weights: &BTreeMap<char, f64>,
    reference: Option<&HmmSet>,
) -> CliResult<Similarity> {
    let hist = histograms_from_votes(&isolated_votes(source, samples)?);
    let (records, w, s) = similarity_from_histograms(&hist, weights)?;
    let (reference, relative) = match reference {
        Some(r) => {
            let rh = histograms_from_votes(&isolated_votes(r, samples)?);
            let (_, _, rs) = similarity_from_histograms(&rh, weights)?;
            (Some(rs), Some(relative_similarity(s, rs)?))
        }
        None => (None, None),
    };
    Ok(Similarity {
        records,
        weights: w,
        similarity: s,
        reference,
        relative,
    })
}
