//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the test
//! harness so the lines are always printed; exits non-zero on any FAIL.

use std::collections::{BTreeMap, HashMap};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xlhwr::bundle::ModelBundle;
use xlhwr::config::SynthConfig;
use xlhwr::dataset::{generate, render_samples, Sample, SynthDataset};
use xlhwr::error::CliError;
use xlhwr::pipeline::*;
use xlhwr_core::alphabet::{DecompTable, Zone};
use xlhwr_core::ghmm::{accumulate, m_step, train, viterbi, CharHmm, Gmm, HmmSet, TrainConfig};
use xlhwr_core::phog::{modifier_features, phog, window_features, PhogVector, WindowGeometry, PHOG_BINS, PHOG_DIM, PHOG_LEVELS};
use xlhwr_core::raster::{BinaryImage, GrayImage};
use xlhwr_core::rbfsvm::SvmParams;
use xlhwr_core::simscore::{char_similarity, entropy, normalized_entropy, relative_similarity, script_similarity as sim_formula, similarity_matrix};
use xlhwr_core::synthscript::{random_script_in_slot, random_word, render_word, RenderStyle, SyntheticScript};
use xlhwr_core::wordrec::{levenshtein, ModifierModels};
use xlhwr_core::wordspot::{evaluate_retrieval, make_query, KeywordQuery, RerankMode, SpotHit};
use xlhwr_core::xmap::LutSet;
use xlhwr_core::zoneseg::split_zones;

// Tolerances and budgets, pinned.
const ENTROPY_TOL: f64 = 1e-12;
const ENTROPY_BUDGET: Duration = Duration::from_secs(1);
const VITERBI_TOL: f64 = 1e-8;
const VITERBI_BUDGET: Duration = Duration::from_secs(10);
const EM_MONOTONE_TOL: f64 = 1e-6;
const EM_CLOSED_FORM_TOL: f64 = 1e-9;
const PHOG_NORM_TOL: f64 = 1e-9;
const SPEARMAN_MIN: f64 = 0.9;
const SWEEP_BUDGET: Duration = Duration::from_secs(5 * 60);
const TRANSFER_GAP_MAX: f64 = 0.05;
const TRANSFER_GAIN_MIN: f64 = 0.10;
const TRANSFER_BUDGET: Duration = Duration::from_secs(10 * 60);
const BASELINE_TOP5_MIN: f64 = 0.90;
const BASELINE_BUDGET: Duration = Duration::from_secs(5 * 60);
const MATRA_ROWS: usize = 2;
const MATRA_SHARE_MIN: f64 = 0.95;
const RERANK_SLACK: f64 = 0.02;
const SAME_SCRIPT_MAP_MIN: f64 = 0.75;

const SEEDS: [u64; 3] = [1, 2, 3];
const RHOS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
/// The sweep trains 18 models; full-size mixtures would not fit the time
/// budget on one core.
const SWEEP_TRAIN: TrainConfig = TrainConfig {
    states: 8,
    mixtures: 8,
    iterations: 6,
    seed: 1,
    min_improvement: 1e-4,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn geometry() -> WindowGeometry {
    WindowGeometry::default()
}

// ---------------------------------------------------------------- 1

fn oracle_entropy(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            p * (1.0 / p).log2()
        })
        .sum()
}

fn criterion_entropy() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut hns = Vec::with_capacity(1000);
    for _ in 0..1000 {
        let k = rng.random_range(1..=12);
        let mut t: Vec<usize> = (0..k).map(|_| if rng.random_bool(0.3) { 0 } else { rng.random_range(1..60) }).collect();
        if t.iter().all(|&c| c == 0) {
            t[0] = 1;
        }
        let h = entropy(&t).unwrap();
        let kk = t.iter().filter(|&&c| c > 0).count();
        let hn = normalized_entropy(h, kk).unwrap();
        let s = char_similarity(hn).unwrap();
        let want_h = oracle_entropy(&t);
        let want_hn = want_h / (1.0 + (kk as f64).log2());
        worst = worst.max((h - want_h).abs()).max((hn - want_hn).abs()).max((s - (1.0 - want_hn)).abs());
        hns.push(hn);
    }
    for chunk in hns.chunks(10) {
        let raw: Vec<f64> = (0..chunk.len()).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let got = sim_formula(chunk, &w).unwrap();
        let dot: f64 = chunk.iter().zip(&w).map(|(h, x)| h * x).sum();
        worst = worst.max((got - (1.0 - dot) / chunk.len() as f64).abs());
    }
    let el = t0.elapsed();
    outcome(
        worst <= ENTROPY_TOL && el < ENTROPY_BUDGET,
        format!("max error {worst:.1e} (tol {ENTROPY_TOL:e}), {el:.2?}"),
    )
}

// ---------------------------------------------------------------- 2

struct Toy {
    set: HmmSet,
    word: Vec<char>,
    frames: Vec<PhogVector>,
}

fn random_toy(rng: &mut ChaCha8Rng) -> Toy {
    const DIM: usize = 2;
    loop {
        let n_chars = rng.random_range(1..=2);
        let ids = ['p', 'q', 'r'];
        let mut models = Vec::new();
        for &id in &ids[..n_chars + 1] {
            let states = rng.random_range(1..=3);
            let mut gmms = Vec::new();
            let mut self_p = Vec::new();
            for _ in 0..states {
                let mix = rng.random_range(1..=2);
                let mut w: Vec<f64> = (0..mix).map(|_| rng.random_range(0.2..1.0)).collect();
                let s: f64 = w.iter().sum();
                w.iter_mut().for_each(|x| *x /= s);
                let means = (0..mix * DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
                let vars = (0..mix * DIM).map(|_| rng.random_range(0.2..1.5)).collect();
                gmms.push(Gmm::new(DIM, w, means, vars).unwrap());
                self_p.push(rng.random_range(0.1..0.9));
            }
            models.push(CharHmm::new(id, gmms, self_p).unwrap());
        }
        let set = HmmSet::new("toy", geometry(), models).unwrap();
        let word: Vec<char> = (0..n_chars).map(|_| ids[rng.random_range(0..=n_chars)]).collect();
        let total: usize = word.iter().map(|c| set.get(*c).unwrap().n_states()).sum();
        if total > 5 {
            continue;
        }
        let t_len = rng.random_range(total..=5);
        let frames = (0..t_len)
            .map(|_| PhogVector::new((0..DIM).map(|_| rng.random_range(-1.5..1.5)).collect()))
            .collect();
        return Toy { set, word, frames };
    }
}

fn density(g: &Gmm, x: &[f64]) -> f64 {
    let d = g.dim();
    (0..g.n_components())
        .map(|m| {
            let mut q = g.weights()[m];
            for i in 0..d {
                let (mu, v) = (g.means()[m * d + i], g.vars()[m * d + i]);
                q *= (-(x[i] - mu).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
            }
            q
        })
        .sum()
}

/// Best path over every monotone state sequence, linear domain.
fn enumerate_paths(toy: &Toy) -> f64 {
    let mut chain = Vec::new();
    for c in &toy.word {
        let m = toy.set.get(*c).unwrap();
        for s in 0..m.n_states() {
            chain.push((m, s, s == 0));
        }
    }
    let enter = 1.0 / toy.set.len() as f64;
    let (n, t_len) = (chain.len(), toy.frames.len());
    let emit = |k: usize, t: usize| density(&chain[k].0.states()[chain[k].1], toy.frames[t].as_slice());
    let stay = |k: usize| chain[k].0.self_probs()[chain[k].1];
    let mut best = 0.0f64;
    for mask in 0u32..(1 << (t_len - 1)) {
        if mask.count_ones() as usize != n - 1 {
            continue;
        }
        let mut k = 0;
        let mut p = enter * emit(0, 0);
        for t in 1..t_len {
            if mask & (1 << (t - 1)) != 0 {
                p *= 1.0 - stay(k);
                k += 1;
                if chain[k].2 {
                    p *= enter;
                }
            } else {
                p *= stay(k);
            }
            p *= emit(k, t);
        }
        best = best.max(p * (1.0 - stay(n - 1)));
    }
    best.ln()
}

fn criterion_viterbi() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let toy = random_toy(&mut rng);
        let word = toy.set.word_model(&toy.word).unwrap();
        let got = viterbi(&toy.frames, &toy.set, &word).unwrap().log_likelihood;
        worst = worst.max((got - enumerate_paths(&toy)).abs());
    }
    let el = t0.elapsed();
    outcome(
        worst <= VITERBI_TOL && el < VITERBI_BUDGET,
        format!("200 models, max |Δ log p| {worst:.1e} (tol {VITERBI_TOL:e}), {el:.2?}"),
    )
}

// ---------------------------------------------------------------- 3

fn toy_sequences(seed: u64, n: usize) -> Vec<(Vec<PhogVector>, Vec<char>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = [('a', [0.0, 0.0, 1.0]), ('b', [2.0, -1.0, 0.0]), ('c', [-1.5, 1.5, 0.5])];
    (0..n)
        .map(|_| {
            let mut chars = Vec::new();
            let mut frames = Vec::new();
            for _ in 0..rng.random_range(1..=3) {
                let (c, mu) = centers[rng.random_range(0..3)];
                chars.push(c);
                for t in 0..rng.random_range(4..9) {
                    let drift = t as f64 * 0.1;
                    frames.push(PhogVector::new(mu.iter().map(|m| m + drift + rng.random_range(-0.6..0.6)).collect()));
                }
            }
            (frames, chars)
        })
        .collect()
}

fn worst_drop(trace: &[f64]) -> f64 {
    trace.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max)
}

fn criterion_em(pipeline_traces: &[Vec<f64>]) -> Outcome {
    let mut drop = f64::NEG_INFINITY;
    let mut runs = 0;
    for seed in 0..6 {
        let data = toy_sequences(seed, 30);
        let pairs: Vec<(&[PhogVector], &[char])> = data.iter().map(|(f, c)| (&f[..], &c[..])).collect();
        let config = TrainConfig {
            states: 1 + seed as usize % 3,
            mixtures: 1 + seed as usize % 2,
            iterations: 12,
            seed,
            min_improvement: f64::NEG_INFINITY,
        };
        drop = drop.max(worst_drop(&train("em", geometry(), &pairs, &config).unwrap().trace));
        runs += 1;
    }
    for t in pipeline_traces {
        drop = drop.max(worst_drop(t));
        runs += 1;
    }

    // one state, one Gaussian: a single update is the sample mean/variance
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let seqs: Vec<Vec<PhogVector>> = (0..6)
        .map(|_| {
            (0..rng.random_range(3..9))
                .map(|_| PhogVector::new(vec![rng.random_range(-2.0..3.0), rng.random_range(0.0..1.0)]))
                .collect()
        })
        .collect();
    let g = Gmm::new(2, vec![1.0], vec![0.3, -0.2], vec![1.0, 2.0]).unwrap();
    let set = HmmSet::new("x", geometry(), vec![CharHmm::new('x', vec![g], vec![0.5]).unwrap()]).unwrap();
    let word = ['x'];
    let pairs: Vec<(&[PhogVector], &[char])> = seqs.iter().map(|f| (&f[..], &word[..])).collect();
    let next = m_step(&set, &accumulate(&set, &pairs).unwrap()).unwrap();
    let est = &next.get('x').unwrap().states()[0];
    let all: Vec<&PhogVector> = seqs.iter().flatten().collect();
    let n = all.len() as f64;
    let mut cf_err: f64 = 0.0;
    for d in 0..2 {
        let mean = all.iter().map(|v| v.as_slice()[d]).sum::<f64>() / n;
        let var = all.iter().map(|v| (v.as_slice()[d] - mean).powi(2)).sum::<f64>() / n;
        cf_err = cf_err.max((est.means()[d] - mean).abs()).max((est.vars()[d] - var).abs());
    }
    outcome(
        drop <= EM_MONOTONE_TOL && cf_err <= EM_CLOSED_FORM_TOL,
        format!(
            "{runs} runs, largest per-iteration drop {drop:.1e} (tol {EM_MONOTONE_TOL:e}); closed-form error {cf_err:.1e} (tol {EM_CLOSED_FORM_TOL:e})"
        ),
    )
}

// ---------------------------------------------------------------- 4

fn edit_oracle(a: &[char], b: &[char]) -> usize {
    fn go(a: &[char], b: &[char], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i] == b[j] {
            go(a, b, i + 1, j + 1, memo)
        } else {
            1 + go(a, b, i + 1, j, memo).min(go(a, b, i, j + 1, memo)).min(go(a, b, i + 1, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

fn criterion_levenshtein() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let alphabet = ['a', 'b', 'c', 'd', 'ক', 'ল'];
    let mut mismatches = 0;
    for _ in 0..1000 {
        let mut word = || -> Vec<char> {
            let n = rng.random_range(0..=12);
            (0..n).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
        };
        let (a, b) = (word(), word());
        if levenshtein(&a, &b) != edit_oracle(&a, &b) {
            mismatches += 1;
        }
    }
    let k: Vec<char> = "kitten".chars().collect();
    let s: Vec<char> = "sitting".chars().collect();
    let ks = levenshtein(&k, &s);
    outcome(mismatches == 0 && ks == 3, format!("{mismatches}/1000 mismatches; kitten/sitting = {ks}"))
}

// ---------------------------------------------------------------- 5

fn level_norms_ok(v: &[f64]) -> bool {
    let mut start = 0;
    for level in 0..=PHOG_LEVELS {
        let len = (1 << (2 * level)) * PHOG_BINS;
        let s: f64 = v[start..start + len].iter().sum();
        if !(s.abs() <= PHOG_NORM_TOL || (s - 1.0).abs() <= PHOG_NORM_TOL) {
            return false;
        }
        start += len;
    }
    start == v.len()
}

fn criterion_phog(prepared: &[Prepared]) -> Outcome {
    let mut checked = 0;
    let mut bad = 0;
    let mut check = |v: &PhogVector| {
        checked += 1;
        if v.len() != PHOG_DIM || !level_norms_ok(v.as_slice()) {
            bad += 1;
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for _ in 0..200 {
        let (w, h) = (rng.random_range(1..24), rng.random_range(1..24));
        let img = GrayImage::new(w, h, (0..w * h).map(|_| rng.random()).collect()).unwrap();
        check(&phog(&img, PHOG_LEVELS, PHOG_BINS).unwrap());
        let bits = BinaryImage::from_vec(w, h, (0..w * h).map(|_| rng.random_bool(0.4)).collect()).unwrap();
        for f in &window_features(&bits, 8, 3).unwrap().frames {
            check(f);
        }
    }
    for p in prepared {
        p.frames.iter().for_each(&mut check);
        for placed in p.split.upper.iter().chain(&p.split.lower) {
            check(&modifier_features(&placed.component).unwrap());
        }
    }
    // 4x4 horizontal step: all mass in the right-angle bin
    let img = GrayImage::new(4, 4, [[0u8; 4], [0; 4], [255; 4], [255; 4]].concat()).unwrap();
    let v = phog(&img, PHOG_LEVELS, PHOG_BINS).unwrap();
    let mut want = vec![0.0; PHOG_DIM];
    want[4] = 1.0;
    for cell in 0..4 {
        want[8 + cell * 8 + 4] = 0.25;
    }
    for y in 1..3 {
        for x in 0..4 {
            want[40 + (y * 4 + x) * 8 + 4] = 0.125;
        }
    }
    let exact = v.as_slice() == &want[..];
    outcome(bad == 0 && exact, format!("{checked} vectors, {bad} bad; 4x4 oracle exact: {exact}"))
}

// ---------------------------------------------------------------- shared synthetic runs

struct SourceModels {
    set: HmmSet,
    modifiers: ModifierModels,
}

fn train_source(samples: &[Sample], prepared: &[Prepared], table: &DecompTable, cfg: &TrainConfig, traces: &mut Vec<Vec<f64>>) -> SourceModels {
    let pairs = middle_pairs(prepared, samples, table).unwrap();
    let out = train_middle("src", geometry(), &pairs, cfg, |_, _| {}).unwrap();
    traces.push(out.trace);
    let comps = modifier_components(prepared, samples);
    let svm = |z: Zone| train_svm(&component_features(&comps[&z]).unwrap(), &SvmParams::default()).unwrap();
    SourceModels {
        set: out.set,
        modifiers: ModifierModels {
            upper: Some(svm(Zone::Upper)),
            lower: Some(svm(Zone::Lower)),
        },
    }
}

fn distinct_keywords(samples: &[Sample], n: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in samples {
        if !out.contains(&s.word) {
            out.push(s.word.clone());
        }
        if out.len() == n {
            break;
        }
    }
    out
}

/// MAP without and with label re-ranking, plus every raw score.
struct SpotRun {
    label: String,
    map_plain: f64,
    map_rerank: f64,
    scores: Vec<f64>,
}

fn spot_run(label: String, models: &SourceModels, luts: &LutSet, table: &DecompTable, keywords: &[String], prepared: &[Prepared], samples: &[Sample]) -> SpotRun {
    let queries: Vec<KeywordQuery> = keywords.iter().map(|k| make_query(k, table, &luts.middle).unwrap()).collect();
    let hits: Vec<Vec<SpotHit>> = spot_all(&models.set, &models.modifiers, luts, &queries, prepared).unwrap();
    let words: Vec<String> = samples.iter().map(|s| s.word.clone()).collect();
    let map = |mode: Option<RerankMode>| {
        let lists: Vec<_> = queries
            .iter()
            .zip(&hits)
            .map(|(q, h)| ranked_list(&rank_hits(h, q, mode), q, &words, |_| true))
            .collect();
        evaluate_retrieval(&lists).unwrap().map
    };
    SpotRun {
        label,
        map_plain: map(None),
        map_rerank: map(Some(RerankMode::Labels)),
        scores: hits.iter().flatten().map(|h| h.score.score).collect(),
    }
}

fn cross_luts(models: &SourceModels, ds: &SynthDataset, tchars: &[Prepared], table: &DecompTable) -> LutSet {
    let iso = isolated_middle_samples(tchars, &ds.target.chars, table).unwrap();
    let comps = modifier_components(tchars, &ds.target.chars);
    let ml = |z: Zone| modifier_lut(models.modifiers.zone(z).unwrap(), z, &comps[&z]).unwrap();
    LutSet {
        middle: middle_lut(&models.set, &iso).unwrap(),
        upper: Some(ml(Zone::Upper)),
        lower: Some(ml(Zone::Lower)),
    }
}

fn top5(models: &SourceModels, luts: LutSet, lexicon: &[String], table: &DecompTable, script: &SyntheticScript, test: &[Sample], prepared: &[Prepared]) -> f64 {
    let rec = recognizer(models.set.clone(), models.modifiers.clone(), luts, lexicon, table, lower_templates(script).unwrap(), 5).unwrap();
    recognition_metrics(&recognize_all(&rec, prepared).unwrap(), test).unwrap().top5
}

#[derive(Default)]
struct Sweep {
    /// `(seed, rho, S_rel)`.
    relative: Vec<(u64, f64, f64)>,
    /// `(seed, same-script, [(rho, top5)])`.
    transfer: Vec<(u64, f64, Vec<(f64, f64)>)>,
    self_relative: Vec<f64>,
    matrix_diagonals: Vec<f64>,
    spots: Vec<SpotRun>,
    traces: Vec<Vec<f64>>,
    similarity_time: Duration,
    transfer_time: Duration,
    /// Seed 1 models and data for the persistence check.
    keep: Option<(SourceModels, SynthDataset)>,
}

fn run_sweep() -> Sweep {
    let mut sw = Sweep::default();
    for seed in SEEDS {
        let t_start = Instant::now();
        let sets: Vec<SynthDataset> = RHOS
            .iter()
            .map(|&rho| {
                generate(&SynthConfig {
                    overlap: rho,
                    seed,
                    ..Default::default()
                })
                .unwrap()
            })
            .collect();
        assert!(sets.iter().all(|d| d.source.script == sets[0].source.script));
        let src = &sets[0].source;
        let stable = src.script.decomposition();
        let stpl = lower_templates(&src.script).unwrap();
        let strain = prepare(&src.train, &stpl, geometry()).unwrap();
        let models = train_source(&src.train, &strain, &stable, &SWEEP_TRAIN, &mut sw.traces);
        let shared = t_start.elapsed();

        // similarity
        let t = Instant::now();
        let schars = prepare(&src.chars, &stpl, geometry()).unwrap();
        let siso = isolated_middle_samples(&schars, &src.chars, &stable).unwrap();
        let mut matrix_rows: Vec<(HmmSet, BTreeMap<char, Vec<Vec<PhogVector>>>, BTreeMap<char, f64>)> =
            vec![(models.set.clone(), siso.clone(), sample_weights(&siso).unwrap())];
        let mut tchars_by_rho = Vec::new();
        for (ds, &rho) in sets.iter().zip(&RHOS) {
            let table = ds.target.script.decomposition();
            let tpl = lower_templates(&ds.target.script).unwrap();
            let tp = prepare(&ds.target.train, &tpl, geometry()).unwrap();
            let pairs = middle_pairs(&tp, &ds.target.train, &table).unwrap();
            let own = train_middle("tgt", geometry(), &pairs, &SWEEP_TRAIN, |_, _| {}).unwrap();
            sw.traces.push(own.trace);
            let tchars = prepare(&ds.target.chars, &tpl, geometry()).unwrap();
            let iso = isolated_middle_samples(&tchars, &ds.target.chars, &table).unwrap();
            let w = sample_weights(&iso).unwrap();
            let s = script_similarity(&models.set, &iso, &w, Some(&own.set)).unwrap();
            sw.relative.push((seed, rho, s.relative.unwrap()));
            let me = script_similarity(&own.set, &iso, &w, Some(&own.set)).unwrap();
            sw.self_relative.push(me.relative.unwrap());
            if rho == 0.5 || rho == 1.0 {
                matrix_rows.push((own.set, iso, w));
            }
            tchars_by_rho.push(tchars);
        }
        let rows: Vec<_> = matrix_rows.iter().map(|(s, i, w)| (s, i, w)).collect();
        let m = similarity_matrix(&rows).unwrap();
        sw.matrix_diagonals.extend((0..m.len()).map(|i| m[i][i]));
        sw.similarity_time += shared + t.elapsed();

        // transfer and spotting
        let t = Instant::now();
        let stest = prepare(&src.test, &stpl, geometry()).unwrap();
        let same = top5(&models, identity_luts(&stable), &src.lexicon, &stable, &src.script, &src.test, &stest);
        let mut cross = Vec::new();
        for ((ds, &rho), tchars) in sets.iter().zip(&RHOS).zip(&tchars_by_rho) {
            if ![0.0, 0.5, 1.0].contains(&rho) {
                continue;
            }
            let table = ds.target.script.decomposition();
            let luts = cross_luts(&models, ds, tchars, &table);
            let tpl = lower_templates(&ds.target.script).unwrap();
            let ttest = prepare(&ds.target.test, &tpl, geometry()).unwrap();
            cross.push((rho, top5(&models, luts.clone(), &ds.target.lexicon, &table, &ds.target.script, &ds.target.test, &ttest)));
            if rho == 1.0 {
                let kw = distinct_keywords(&ds.target.test, 20);
                sw.spots.push(spot_run(format!("seed {seed} cross rho=1"), &models, &luts, &table, &kw, &ttest, &ds.target.test));
            }
        }
        sw.transfer.push((seed, same, cross));
        sw.transfer_time += shared + t.elapsed();
        let kw = distinct_keywords(&src.test, 20);
        sw.spots.push(spot_run(format!("seed {seed} same-script"), &models, &identity_luts(&stable), &stable, &kw, &stest, &src.test));
        if seed == SEEDS[0] {
            sw.keep = Some((models, sets.into_iter().next().unwrap()));
        }
    }
    sw
}

/// Average ranks, ties sharing the mean rank.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

// ---------------------------------------------------------------- 6, 7, 8, 9, 12

fn criterion_spot_sign(sw: &Sweep, fixture: &SpotRun) -> Outcome {
    let all = sw.spots.iter().chain(std::iter::once(fixture));
    let (mut pairs, mut bad, mut max) = (0, 0, f64::NEG_INFINITY);
    for run in all {
        for &s in &run.scores {
            pairs += 1;
            max = max.max(s);
            if s > 0.0 {
                bad += 1;
            }
        }
    }
    outcome(bad == 0 && pairs > 0, format!("{pairs} keyword/image pairs, {bad} with S > 0, max S {max:.3e}"))
}

fn criterion_self_similarity(sw: &Sweep) -> Outcome {
    let self_ok = sw.self_relative.iter().all(|&v| v == 1.0);
    let diag_ok = sw.matrix_diagonals.iter().all(|&v| v == 1.0 && format!("{v:.2}") == "1.00");
    let identity = relative_similarity(0.0537, 0.0537).unwrap() == 1.0;
    outcome(
        self_ok && diag_ok && identity,
        format!(
            "{} self scores all 1.0: {self_ok}; {} matrix diagonal entries all 1.00: {diag_ok}",
            sw.self_relative.len(),
            sw.matrix_diagonals.len()
        ),
    )
}

fn criterion_monotone_similarity(sw: &Sweep) -> Outcome {
    let rho: Vec<f64> = sw.relative.iter().map(|r| r.1).collect();
    let rel: Vec<f64> = sw.relative.iter().map(|r| r.2).collect();
    let pooled = spearman(&rho, &rel);
    let mut per_seed = Vec::new();
    let mut lines = Vec::new();
    for seed in SEEDS {
        let pts: Vec<&(u64, f64, f64)> = sw.relative.iter().filter(|r| r.0 == seed).collect();
        let x: Vec<f64> = pts.iter().map(|r| r.1).collect();
        let y: Vec<f64> = pts.iter().map(|r| r.2).collect();
        per_seed.push(spearman(&x, &y));
        lines.push(format!("seed {seed}: {}", y.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" ")));
    }
    let min_seed = per_seed.iter().copied().fold(f64::INFINITY, f64::min);
    let el = sw.similarity_time;
    outcome(
        pooled >= SPEARMAN_MIN && min_seed >= SPEARMAN_MIN && el < SWEEP_BUDGET,
        format!(
            "Spearman pooled {pooled:.3}, worst seed {min_seed:.3} (min {SPEARMAN_MIN}); S_rel by rho {}; {el:.0?}",
            lines.join("; ")
        ),
    )
}

fn criterion_transfer(sw: &Sweep) -> Outcome {
    let mean = |f: &dyn Fn(&(u64, f64, Vec<(f64, f64)>)) -> f64| sw.transfer.iter().map(f).sum::<f64>() / sw.transfer.len() as f64;
    let at = |rho: f64| move |t: &(u64, f64, Vec<(f64, f64)>)| t.2.iter().find(|c| c.0 == rho).unwrap().1;
    let same = mean(&|t| t.1);
    let (r0, r5, r1) = (mean(&at(0.0)), mean(&at(0.5)), mean(&at(1.0)));
    let close = (same - r1).abs() <= TRANSFER_GAP_MAX;
    let gain = r5 - r0 >= TRANSFER_GAIN_MIN;
    let el = sw.transfer_time;
    outcome(
        close && gain && el < TRANSFER_BUDGET,
        format!(
            "mean top-5 same {same:.3}, rho=1 {r1:.3} (within {TRANSFER_GAP_MAX}: {close}); rho=0.5 {r5:.3} vs rho=0 {r0:.3} (gain >= {TRANSFER_GAIN_MIN}: {gain}); {el:.0?}"
        ),
    )
}

/// Words sharing one middle-zone sequence and differing only in modifiers.
fn collision_fixture(script: &SyntheticScript, seed: u64) -> (Vec<String>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (u, l) = (script.chars(Zone::Upper), script.chars(Zone::Lower));
    let mut words = Vec::new();
    for _ in 0..8 {
        let bases: Vec<char> = (0..3).map(|_| script.middle[rng.random_range(0..script.middle.len())].id).collect();
        let plain: String = bases.iter().collect();
        let with_upper: String = [bases[0], u[rng.random_range(0..u.len())], bases[1], bases[2]].iter().collect();
        let with_lower: String = [bases[0], bases[1], l[rng.random_range(0..l.len())], bases[2]].iter().collect();
        for w in [plain, with_upper, with_lower] {
            if !words.contains(&w) {
                words.push(w);
            }
        }
    }
    let mut images = Vec::new();
    for w in &words {
        images.extend(std::iter::repeat_n(w.clone(), 3));
    }
    (words, images)
}

fn criterion_rerank(sw: &Sweep, fixture: &SpotRun) -> Outcome {
    let mut lines = Vec::new();
    let mut never_worse = true;
    for r in sw.spots.iter().chain(std::iter::once(fixture)) {
        never_worse &= r.map_rerank >= r.map_plain - RERANK_SLACK;
        lines.push(format!("{} {:.3}->{:.3}", r.label, r.map_plain, r.map_rerank));
    }
    let strictly = fixture.map_rerank > fixture.map_plain;
    let same: Vec<&SpotRun> = sw.spots.iter().filter(|r| r.label.ends_with("same-script")).collect();
    let same_min = same.iter().map(|r| r.map_rerank).fold(f64::INFINITY, f64::min);
    outcome(
        never_worse && strictly && same_min >= SAME_SCRIPT_MAP_MIN,
        format!(
            "MAP plain->reranked: {}; collision fixture strictly better: {strictly}; worst same-script MAP {same_min:.3} (min {SAME_SCRIPT_MAP_MIN})",
            lines.join(", ")
        ),
    )
}

// ---------------------------------------------------------------- 10

fn criterion_baseline(traces: &mut Vec<Vec<f64>>) -> Outcome {
    let t0 = Instant::now();
    let ds = generate(&SynthConfig::default()).unwrap();
    let src = &ds.source;
    let table = src.script.decomposition();
    let tpl = lower_templates(&src.script).unwrap();
    let train_p = prepare(&src.train, &tpl, geometry()).unwrap();
    let models = train_source(&src.train, &train_p, &table, &TrainConfig::default(), traces);
    let test_p = prepare(&src.test, &tpl, geometry()).unwrap();
    let acc = top5(&models, identity_luts(&table), &src.lexicon, &table, &src.script, &src.test, &test_p);
    let el = t0.elapsed();
    outcome(
        acc >= BASELINE_TOP5_MIN && el < BASELINE_BUDGET,
        format!(
            "{} middle, {}+{} modifiers, {} training words, lexicon {}, 8 states x 32 mixtures: top-5 {acc:.3} (min {BASELINE_TOP5_MIN}); {el:.0?}",
            src.script.middle.len(),
            src.script.upper.len(),
            src.script.lower.len(),
            src.train.len(),
            src.lexicon.len()
        ),
    )
}

// ---------------------------------------------------------------- 11

fn criterion_zones() -> Outcome {
    let script = random_script_in_slot(20, 4, 4, 11, 0).unwrap();
    let tpl = lower_templates(&script).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let (mut within, mut conserved) = (0, 0);
    let n = 200;
    for i in 0..n {
        let k = rng.random_range(3..=5);
        let word = random_word(&script, k, 0.3, 0.25, &mut rng);
        let style = RenderStyle::default().sample(&mut rng);
        let (img, gt) = render_word(&script, &word, &style, 5000 + i).unwrap();
        let split = split_zones(&img, &tpl).unwrap();
        let (m0, m1) = gt.matra.unwrap();
        if split.matra.0.abs_diff(m0) <= MATRA_ROWS && split.matra.1.abs_diff(m1) <= MATRA_ROWS {
            within += 1;
        }
        if split.conserves_ink() {
            conserved += 1;
        }
    }
    let share = within as f64 / n as f64;
    outcome(
        share >= MATRA_SHARE_MIN && conserved == n,
        format!("matra within ±{MATRA_ROWS} rows on {within}/{n}; ink conserved on {conserved}/{n}"),
    )
}

// ---------------------------------------------------------------- 13

fn criterion_grid() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("grid.cfg"),
        "n_middle = 8\nn_upper = 2\nn_lower = 2\nlexicon_size = 15\nn_train = 80\nn_test = 20\nchar_samples = 2\nout_dir = g\n",
    )
    .unwrap();
    let bin = env!("CARGO_BIN_EXE_xlhwr");
    let synth = Command::new(bin).current_dir(d).args(["synth", "grid.cfg"]).output().unwrap();
    if !synth.status.success() {
        return outcome(false, format!("synth failed: {}", String::from_utf8_lossy(&synth.stderr)));
    }
    let out = Command::new(bin)
        .current_dir(d)
        .args([
            "grid",
            "--train",
            "g/source/data/train.tsv",
            "--test",
            "g/source/data/test.tsv",
            "--lexicon",
            "g/source/lexicon.txt",
            "--states",
            "6,7,8,9",
            "--mixtures",
            "16,32,64",
            "--iterations",
            "3",
            "--out",
            "grid.tsv",
        ])
        .output()
        .unwrap();
    let report = std::fs::read_to_string(d.join("grid.tsv")).unwrap_or_default();
    let cells: Vec<(usize, usize)> = report
        .lines()
        .skip(1)
        .filter_map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            Some((f.first()?.parse().ok()?, f.get(1)?.parse().ok()?))
        })
        .collect();
    let want: Vec<(usize, usize)> = [6, 7, 8, 9].iter().flat_map(|&s| [16, 32, 64].map(|m| (s, m))).collect();
    outcome(
        out.status.success() && cells == want,
        format!("exit {:?}, {} of 12 cells reported", out.status.code(), cells.len()),
    )
}

// ---------------------------------------------------------------- 14

fn criterion_persistence(models: &SourceModels, ds: &SynthDataset) -> Outcome {
    let src = &ds.source;
    let table = src.script.decomposition();
    let tpl = lower_templates(&src.script).unwrap();
    let luts = identity_luts(&table);
    let bundle = ModelBundle {
        geometry: geometry(),
        seed: 1,
        hmm: Some(models.set.clone()),
        upper: models.modifiers.upper.clone(),
        lower: models.modifiers.lower.clone(),
        luts: vec![luts.middle.clone(), luts.upper.clone().unwrap(), luts.lower.clone().unwrap()],
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bundle");
    bundle.save(&path).unwrap();
    let back = ModelBundle::load(&path).unwrap();
    let loaded = SourceModels {
        set: back.hmm.clone().unwrap(),
        modifiers: ModifierModels {
            upper: back.upper.clone(),
            lower: back.lower.clone(),
        },
    };
    let test: Vec<Sample> = src.test[..40].to_vec();
    let prepared = prepare(&test, &tpl, geometry()).unwrap();
    let decode = |m: &SourceModels, l: LutSet| {
        let rec = recognizer(m.set.clone(), m.modifiers.clone(), l, &src.lexicon, &table, tpl.clone(), 5).unwrap();
        recognize_all(&rec, &prepared).unwrap()
    };
    let (a, b) = (decode(models, luts.clone()), decode(&loaded, back.lut_set().unwrap()));
    let mut scores = 0;
    let mut equal = a.len() == b.len();
    for (x, y) in a.iter().zip(&b) {
        equal &= x.alignment.log_likelihood.to_bits() == y.alignment.log_likelihood.to_bits();
        equal &= x.candidates.len() == y.candidates.len();
        for (p, q) in x.candidates.iter().zip(&y.candidates) {
            equal &= p.word == q.word && p.log_likelihood.to_bits() == q.log_likelihood.to_bits();
            scores += 1;
        }
    }
    let kw = distinct_keywords(&test, 10);
    let sa = spot_run(String::new(), models, &luts, &table, &kw, &prepared, &test);
    let sb = spot_run(String::new(), &loaded, &back.lut_set().unwrap(), &table, &kw, &prepared, &test);
    equal &= sa.scores.len() == sb.scores.len() && sa.scores.iter().zip(&sb.scores).all(|(p, q)| p.to_bits() == q.to_bits());
    scores += sa.scores.len();
    let classify_equal = prepared
        .iter()
        .flat_map(|p| p.split.upper.iter())
        .all(|pl| {
            let x = models.modifiers.upper.as_ref().unwrap().classify_component(&pl.component).unwrap();
            let y = loaded.modifiers.upper.as_ref().unwrap().classify_component(&pl.component).unwrap();
            x == y
        });

    let text = std::fs::read_to_string(&path).unwrap();
    let body = text.find("\ngmm ").unwrap() + 1;
    let mut corrupted = text.clone().into_bytes();
    let pos = body + corrupted[body..].iter().position(|c| c.is_ascii_digit()).unwrap();
    corrupted[pos] = if corrupted[pos] == b'9' { b'8' } else { corrupted[pos] + 1 };
    let rejected = matches!(
        ModelBundle::from_text(std::str::from_utf8(&corrupted).unwrap()),
        Err(CliError::Bundle(m)) if m.contains("checksum")
    );
    outcome(
        equal && classify_equal && rejected,
        format!("{scores} decode/spot scores bit-identical after reload: {equal}; SVM outputs identical: {classify_equal}; corrupted bundle rejected by checksum: {rejected}"),
    )
}

fn main() -> ExitCode {
    let t0 = Instant::now();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "entropy chain oracle", criterion_entropy()));
    results.push((2, "Viterbi oracle", criterion_viterbi()));
    results.push((4, "Levenshtein oracle", criterion_levenshtein()));
    results.push((11, "zone segmentation", criterion_zones()));

    let mut sw = run_sweep();
    let (models, ds) = sw.keep.take().unwrap();

    let (words, image_words) = collision_fixture(&ds.source.script, 77);
    let table = ds.source.script.decomposition();
    let tpl = lower_templates(&ds.source.script).unwrap();
    let images = render_samples(&ds.source.script, &image_words, &RenderStyle::default(), 78).unwrap();
    let prepared = prepare(&images, &tpl, geometry()).unwrap();
    let fixture = spot_run("collision fixture".into(), &models, &identity_luts(&table), &table, &words, &prepared, &images);

    results.push((5, "PHOG shape and normalization", criterion_phog(&prepared)));
    results.push((6, "spotting score sign", criterion_spot_sign(&sw, &fixture)));
    results.push((7, "self-similarity identity", criterion_self_similarity(&sw)));
    results.push((8, "similarity tracks overlap", criterion_monotone_similarity(&sw)));
    results.push((9, "transfer tracks overlap", criterion_transfer(&sw)));
    results.push((12, "modifier re-ranking", criterion_rerank(&sw, &fixture)));
    results.push((14, "persistence", criterion_persistence(&models, &ds)));
    results.push((10, "same-script baseline", criterion_baseline(&mut sw.traces)));
    results.push((3, "EM monotonicity", criterion_em(&sw.traces)));
    results.push((13, "hyperparameter grid", criterion_grid()));

    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (id, name, o) in &results {
        if !o.pass {
            failed += 1;
        }
        println!("{} criterion {id:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed, {:.0?}", results.len() - failed, t0.elapsed());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
