//! Continuous-density GMM-HMMs for the cursive middle zone.
//!
//! Every character is a left-to-right chain of states with a self-loop and
//! a forward transition; the forward transition of the last state is the
//! exit. Emissions are mixtures of diagonal Gaussians over PHOG frames.
//! Word models chain character models, and entering any character (including
//! the first one) costs `ln(1/|set|)`. The filler loop uses the same cost,
//! so a keyword path is always also a filler path with an identical score.
//!
//! All arithmetic is in the log domain.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::{self, LN_2PI};
use crate::phog::{PhogVector, WindowGeometry};

pub const DEFAULT_STATES: usize = 8;
pub const DEFAULT_MIXTURES: usize = 32;
pub const VARIANCE_FLOOR: f64 = 1e-4;
pub const WEIGHT_FLOOR: f64 = 1e-8;
pub const TRANSITION_FLOOR: f64 = 1e-6;
pub const KMEANS_ITERATIONS: usize = 20;
/// Sequences per E-step accumulation chunk. Chunk accumulators are merged
/// in chunk order, which keeps parallel and sequential training identical.
pub const EM_CHUNK: usize = 16;

/// Mixture of diagonal Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct Gmm {
    dim: usize,
    weights: Vec<f64>,
    means: Vec<f64>,
    vars: Vec<f64>,
    log_norm: Vec<f64>,
    inv_vars: Vec<f64>,
}

impl Gmm {
    /// `means` and `vars` are `weights.len() × dim`, row-major.
    pub fn new(dim: usize, weights: Vec<f64>, means: Vec<f64>, vars: Vec<f64>) -> Result<Self> {
        let m = weights.len();
        if m == 0 || dim == 0 || means.len() != m * dim || vars.len() != m * dim {
            return Err(Error::InvalidArgument("mixture shape".into()));
        }
        if vars.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("non-positive variance".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidArgument("non-positive mixture weight".into()));
        }
        let mut g = Gmm {
            dim,
            weights,
            means,
            vars,
            log_norm: Vec::new(),
            inv_vars: Vec::new(),
        };
        g.refresh();
        Ok(g)
    }

    fn refresh(&mut self) {
        let d = self.dim;
        self.inv_vars = self.vars.iter().map(|v| 1.0 / v).collect();
        self.log_norm = (0..self.weights.len())
            .map(|m| {
                let log_det: f64 = self.vars[m * d..(m + 1) * d].iter().map(|&v| math::ln(v)).sum();
                math::ln(self.weights[m]) - 0.5 * (d as f64 * LN_2PI + log_det)
            })
            .collect();
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn vars(&self) -> &[f64] {
        &self.vars
    }

    /// `ln w_m + ln N(x; μ_m, Σ_m)` for every component.
    pub fn component_log_densities(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (m, o) in out.iter_mut().enumerate().take(self.weights.len()) {
            let mu = &self.means[m * d..(m + 1) * d];
            let iv = &self.inv_vars[m * d..(m + 1) * d];
            let mut q = 0.0;
            for i in 0..d {
                let diff = x[i] - mu[i];
                q += diff * diff * iv[i];
            }
            *o = self.log_norm[m] - 0.5 * q;
        }
    }

    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.weights.len()];
        self.component_log_densities(x, &mut buf);
        math::log_sum_exp(&buf)
    }
}

/// Left-to-right GMM-HMM of one character.
#[derive(Debug, Clone, PartialEq)]
pub struct CharHmm {
    id: char,
    states: Vec<Gmm>,
    self_prob: Vec<f64>,
    log_self: Vec<f64>,
    log_next: Vec<f64>,
}

impl CharHmm {
    /// `self_prob[s]` is the self-loop probability of state `s`; the rest of
    /// its mass goes to the next state (or the exit, for the last state).
    pub fn new(id: char, states: Vec<Gmm>, self_prob: Vec<f64>) -> Result<Self> {
        if states.is_empty() || states.len() != self_prob.len() {
            return Err(Error::InvalidArgument("state count".into()));
        }
        let dim = states[0].dim;
        if states.iter().any(|g| g.dim != dim) {
            return Err(Error::InvalidArgument("mixed state dimensions".into()));
        }
        if self_prob.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::InvalidArgument("self-loop probability".into()));
        }
        let log_self = self_prob.iter().map(|&p| math::ln(p)).collect();
        let log_next = self_prob.iter().map(|&p| math::ln(1.0 - p)).collect();
        Ok(CharHmm {
            id,
            states,
            self_prob,
            log_self,
            log_next,
        })
    }

    pub fn id(&self) -> char {
        self.id
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_mixtures(&self) -> usize {
        self.states.iter().map(Gmm::n_components).max().unwrap_or(0)
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim
    }

    pub fn states(&self) -> &[Gmm] {
        &self.states
    }

    pub fn self_probs(&self) -> &[f64] {
        &self.self_prob
    }

    pub fn log_self(&self, s: usize) -> f64 {
        self.log_self[s]
    }

    pub fn log_next(&self, s: usize) -> f64 {
        self.log_next[s]
    }
}

/// The character models of one script.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmSet {
    pub script_id: String,
    pub geometry: WindowGeometry,
    models: BTreeMap<char, CharHmm>,
}

impl HmmSet {
    pub fn new(script_id: impl Into<String>, geometry: WindowGeometry, models: Vec<CharHmm>) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut dim = None;
        for m in models {
            if *dim.get_or_insert(m.dim()) != m.dim() {
                return Err(Error::DimensionMismatch {
                    expected: dim.unwrap_or(0),
                    got: m.dim(),
                });
            }
            if map.insert(m.id, m).is_some() {
                return Err(Error::InvalidArgument("duplicate character model".into()));
            }
        }
        if map.is_empty() {
            return Err(Error::NoData("empty model set".into()));
        }
        Ok(HmmSet {
            script_id: script_id.into(),
            geometry,
            models: map,
        })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn chars(&self) -> Vec<char> {
        self.models.keys().copied().collect()
    }

    pub fn get(&self, c: char) -> Option<&CharHmm> {
        self.models.get(&c)
    }

    pub fn models(&self) -> impl Iterator<Item = &CharHmm> {
        self.models.values()
    }

    pub fn dim(&self) -> usize {
        self.models.values().next().map_or(0, CharHmm::dim)
    }

    /// `ln(1/|set|)`, the cost of entering any character.
    pub fn inter_cost(&self) -> f64 {
        -math::ln(self.models.len() as f64)
    }

    pub fn word_model(&self, chars: &[char]) -> Result<WordModel> {
        if chars.is_empty() {
            return Err(Error::EmptyWord);
        }
        if let Some(&c) = chars.iter().find(|c| !self.models.contains_key(c)) {
            return Err(Error::UnknownChar(c));
        }
        Ok(WordModel {
            chars: chars.to_vec(),
        })
    }

    pub fn total_states(&self, word: &WordModel) -> usize {
        word.chars.iter().map(|c| self.models[c].n_states()).sum()
    }

    /// Emission log-likelihoods of every state of every model for `frames`.
    pub fn emissions(&self, frames: &[PhogVector]) -> Result<EmissionTable> {
        self.emissions_for(frames, self.models.keys().copied())
    }

    pub fn emissions_for(
        &self,
        frames: &[PhogVector],
        chars: impl IntoIterator<Item = char>,
    ) -> Result<EmissionTable> {
        let dim = self.dim();
        if let Some(f) = frames.iter().find(|f| f.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: f.len(),
            });
        }
        let t_len = frames.len();
        let mut per_model = BTreeMap::new();
        for c in chars {
            if per_model.contains_key(&c) {
                continue;
            }
            let model = self.models.get(&c).ok_or(Error::UnknownChar(c))?;
            let mut rows = vec![0.0; model.n_states() * t_len];
            for (s, gmm) in model.states.iter().enumerate() {
                for (t, f) in frames.iter().enumerate() {
                    rows[s * t_len + t] = gmm.log_likelihood(f.as_slice());
                }
            }
            per_model.insert(c, rows);
        }
        Ok(EmissionTable {
            frames: t_len,
            per_model,
        })
    }
}

/// Precomputed state emission scores for one observation sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionTable {
    frames: usize,
    per_model: BTreeMap<char, Vec<f64>>,
}

impl EmissionTable {
    pub fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    pub fn get(&self, c: char, state: usize, t: usize) -> f64 {
        self.per_model[&c][state * self.frames + t]
    }

    fn rows(&self, c: char) -> Result<&[f64]> {
        self.per_model
            .get(&c)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownChar(c))
    }
}

/// A character sequence decoded as one chained HMM.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WordModel {
    pub chars: Vec<char>,
}

/// Per-character frame spans `(first, last)` (inclusive) of a decoded path.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub spans: Vec<(usize, usize)>,
    pub log_likelihood: f64,
}

struct ChainState<'a> {
    model: &'a CharHmm,
    state: usize,
    /// first state of a character: entered with the inter-character cost
    entry: bool,
    char_index: usize,
    emissions: &'a [f64],
}

fn chain<'a>(set: &'a HmmSet, table: &'a EmissionTable, word: &WordModel) -> Result<Vec<ChainState<'a>>> {
    let mut out = Vec::new();
    for (i, &c) in word.chars.iter().enumerate() {
        let model = set.get(c).ok_or(Error::UnknownChar(c))?;
        let rows = table.rows(c)?;
        for s in 0..model.n_states() {
            out.push(ChainState {
                model,
                state: s,
                entry: s == 0,
                char_index: i,
                emissions: &rows[s * table.frames..(s + 1) * table.frames],
            });
        }
    }
    Ok(out)
}

/// Viterbi forced alignment of `frames` against `word`.
pub fn viterbi(frames: &[PhogVector], set: &HmmSet, word: &WordModel) -> Result<Alignment> {
    let table = set.emissions_for(frames, word.chars.iter().copied())?;
    viterbi_table(&table, set, word)
}

/// Viterbi over precomputed emissions.
pub fn viterbi_table(table: &EmissionTable, set: &HmmSet, word: &WordModel) -> Result<Alignment> {
    let states = chain(set, table, word)?;
    let n = states.len();
    let t_len = table.frames;
    if t_len < n {
        return Err(Error::TooFewFrames {
            frames: t_len,
            states: n,
        });
    }
    let inter = set.inter_cost();
    let mut prev = vec![f64::NEG_INFINITY; n];
    let mut cur = vec![f64::NEG_INFINITY; n];
    // true: arrived from the previous chain state
    let mut moved = vec![false; n * t_len];
    prev[0] = inter + states[0].emissions[0];
    for t in 1..t_len {
        // states beyond t are unreachable; states that cannot finish are pruned
        let lo = (n + t).saturating_sub(t_len);
        let hi = t.min(n - 1);
        for v in cur.iter_mut() {
            *v = f64::NEG_INFINITY;
        }
        for k in lo..=hi {
            let st = &states[k];
            let stay = prev[k] + st.model.log_self(st.state);
            let mv = if k == 0 {
                f64::NEG_INFINITY
            } else {
                let p = &states[k - 1];
                let v = prev[k - 1] + p.model.log_next(p.state);
                if st.entry {
                    v + inter
                } else {
                    v
                }
            };
            let (best, from_prev) = if mv > stay { (mv, true) } else { (stay, false) };
            moved[t * n + k] = from_prev;
            cur[k] = best + st.emissions[t];
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    let last = &states[n - 1];
    let score = prev[n - 1] + last.model.log_next(last.state);

    let mut spans = vec![(0usize, 0usize); word.chars.len()];
    let mut k = n - 1;
    let mut t = t_len - 1;
    spans[states[k].char_index].1 = t;
    loop {
        if t == 0 {
            spans[states[k].char_index].0 = 0;
            break;
        }
        if moved[t * n + k] {
            let ci = states[k].char_index;
            k -= 1;
            if states[k].char_index != ci {
                spans[ci].0 = t;
                spans[states[k].char_index].1 = t - 1;
            }
        }
        t -= 1;
    }
    Ok(Alignment {
        spans,
        log_likelihood: score,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NBestEntry {
    /// Position of the entry in the lexicon passed to [`decode_nbest`].
    pub index: usize,
    pub log_likelihood: f64,
    pub alignment: Alignment,
}

/// Scores every lexicon entry and returns the best `n`, highest
/// log-likelihood first, ties in lexicon order.
pub fn decode_nbest(
    table: &EmissionTable,
    set: &HmmSet,
    lexicon: &[WordModel],
    n: usize,
) -> Result<Vec<NBestEntry>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n-best size 0".into()));
    }
    if lexicon.is_empty() {
        return Err(Error::EmptyLexicon);
    }
    let mut scored = Vec::new();
    for (index, word) in lexicon.iter().enumerate() {
        match viterbi_table(table, set, word) {
            Ok(alignment) => scored.push(NBestEntry {
                index,
                log_likelihood: alignment.log_likelihood,
                alignment,
            }),
            Err(Error::TooFewFrames { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if scored.is_empty() {
        return Err(Error::NoFeasibleEntry);
    }
    scored.sort_by(|a, b| {
        b.log_likelihood
            .partial_cmp(&a.log_likelihood)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.index.cmp(&b.index))
    });
    scored.truncate(n);
    Ok(scored)
}

/// Best unconstrained path through a loop of all character models (the
/// filler model). Returns its log-likelihood and character sequence.
pub fn loop_score(table: &EmissionTable, set: &HmmSet) -> Result<(f64, Vec<char>)> {
    let models: Vec<(&CharHmm, &[f64])> = set
        .models()
        .map(|m| table.rows(m.id).map(|r| (m, r)))
        .collect::<Result<_>>()?;
    let t_len = table.frames;
    let min_states = models.iter().map(|(m, _)| m.n_states()).min().unwrap_or(0);
    if t_len < min_states || t_len == 0 {
        return Err(Error::TooFewFrames {
            frames: t_len,
            states: min_states,
        });
    }
    let inter = set.inter_cost();
    let offsets: Vec<usize> = models
        .iter()
        .scan(0, |acc, (m, _)| {
            let o = *acc;
            *acc += m.n_states();
            Some(o)
        })
        .collect();
    let total: usize = models.iter().map(|(m, _)| m.n_states()).sum();
    let mut prev = vec![f64::NEG_INFINITY; total];
    let mut cur = vec![f64::NEG_INFINITY; total];
    let mut moved = vec![false; total * t_len];
    let mut exit_arg = vec![0usize; t_len];

    for (mi, (_, rows)) in models.iter().enumerate() {
        prev[offsets[mi]] = inter + rows[0];
    }
    let best_exit = |delta: &[f64]| -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (mi, (m, _)) in models.iter().enumerate() {
            let last = m.n_states() - 1;
            let v = delta[offsets[mi] + last] + m.log_next(last);
            if v > best.0 {
                best = (v, mi);
            }
        }
        best
    };
    for t in 1..t_len {
        let (exit, arg) = best_exit(&prev);
        exit_arg[t - 1] = arg;
        let enter = exit + inter;
        for (mi, (m, rows)) in models.iter().enumerate() {
            let o = offsets[mi];
            for s in 0..m.n_states() {
                let stay = prev[o + s] + m.log_self(s);
                let mv = if s == 0 {
                    enter
                } else {
                    prev[o + s - 1] + m.log_next(s - 1)
                };
                let (best, from_prev) = if mv > stay { (mv, true) } else { (stay, false) };
                moved[t * total + o + s] = from_prev;
                cur[o + s] = best + rows[s * t_len + t];
            }
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    let (score, mut mi) = best_exit(&prev);
    if score == f64::NEG_INFINITY {
        return Err(Error::TooFewFrames {
            frames: t_len,
            states: min_states,
        });
    }
    let mut s = models[mi].0.n_states() - 1;
    let mut path = vec![models[mi].0.id];
    let mut t = t_len - 1;
    while t > 0 {
        if moved[t * total + offsets[mi] + s] {
            if s == 0 {
                mi = exit_arg[t - 1];
                s = models[mi].0.n_states() - 1;
                path.push(models[mi].0.id);
            } else {
                s -= 1;
            }
        }
        t -= 1;
    }
    path.reverse();
    Ok((score, path))
}

/// Hyper-parameters for flat-start training followed by Baum-Welch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub states: usize,
    pub mixtures: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Stop once an iteration improves the data log-likelihood by less.
    pub min_improvement: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            states: DEFAULT_STATES,
            mixtures: DEFAULT_MIXTURES,
            iterations: 10,
            seed: 0,
            min_improvement: 1e-4,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Maximizes `Σ n_k ln w_k` subject to `Σ w_k = 1` and `w_k ≥ WEIGHT_FLOOR`.
pub fn project_weights(counts: &[f64]) -> Vec<f64> {
    let k = counts.len();
    let mut clamped = vec![false; k];
    loop {
        let free_mass = 1.0 - WEIGHT_FLOOR * clamped.iter().filter(|&&c| c).count() as f64;
        let free_total: f64 = counts
            .iter()
            .zip(&clamped)
            .filter(|(_, &c)| !c)
            .map(|(n, _)| *n)
            .sum();
        let free_count = clamped.iter().filter(|&&c| !c).count();
        let w: Vec<f64> = counts
            .iter()
            .zip(&clamped)
            .map(|(&n, &c)| {
                if c {
                    WEIGHT_FLOOR
                } else if free_total > 0.0 {
                    free_mass * n / free_total
                } else {
                    free_mass / free_count as f64
                }
            })
            .collect();
        let mut changed = false;
        for i in 0..k {
            if !clamped[i] && w[i] < WEIGHT_FLOOR {
                clamped[i] = true;
                changed = true;
            }
        }
        if !changed {
            return w;
        }
    }
}

/// Fits an `nmix`-component diagonal GMM to `points` by k-means.
fn fit_gmm(points: &[&[f64]], nmix: usize, rng: &mut ChaCha8Rng) -> Result<Gmm> {
    let n = points.len();
    if n == 0 {
        return Err(Error::NoData("state without frames".into()));
    }
    let dim = points[0].len();
    // k-means++ seeding
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(nmix);
    centers.push(points[rng.random_range(0..n)].to_vec());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < nmix {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[pick].to_vec());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centers.last().expect("pushed")));
        }
    }

    let assign_all = |centers: &[Vec<f64>]| -> Vec<usize> {
        points
            .iter()
            .map(|p| {
                let mut best = (f64::INFINITY, 0);
                for (k, c) in centers.iter().enumerate() {
                    let d = sq_dist(p, c);
                    if d < best.0 {
                        best = (d, k);
                    }
                }
                best.1
            })
            .collect()
    };
    let mut assign = assign_all(&centers);
    for _ in 0..KMEANS_ITERATIONS {
        let mut counts = vec![0usize; nmix];
        for &a in &assign {
            counts[a] += 1;
        }
        // refill empty clusters from the farthest point of the largest one
        for k in 0..nmix {
            if counts[k] > 0 {
                continue;
            }
            let largest = (0..nmix).max_by_key(|&j| (counts[j], core::cmp::Reverse(j))).expect("nmix > 0");
            if counts[largest] < 2 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| assign[i] == largest)
                .max_by(|&a, &b| {
                    sq_dist(points[a], &centers[largest])
                        .partial_cmp(&sq_dist(points[b], &centers[largest]))
                        .unwrap_or(core::cmp::Ordering::Equal)
                        .then(b.cmp(&a))
                })
                .expect("largest cluster is non-empty");
            assign[far] = k;
            counts[largest] -= 1;
            counts[k] += 1;
        }
        for (k, center) in centers.iter_mut().enumerate() {
            if counts[k] == 0 {
                continue;
            }
            center.iter_mut().for_each(|v| *v = 0.0);
            for (i, p) in points.iter().enumerate() {
                if assign[i] == k {
                    for (c, x) in center.iter_mut().zip(p.iter()) {
                        *c += x;
                    }
                }
            }
            center.iter_mut().for_each(|v| *v /= counts[k] as f64);
        }
        let next = assign_all(&centers);
        if next == assign {
            break;
        }
        assign = next;
    }

    let mut counts = vec![0.0; nmix];
    let mut means = vec![0.0; nmix * dim];
    let mut vars = vec![0.0; nmix * dim];
    for (i, p) in points.iter().enumerate() {
        let k = assign[i];
        counts[k] += 1.0;
        for (d, &x) in p.iter().enumerate() {
            means[k * dim + d] += x;
        }
    }
    for k in 0..nmix {
        if counts[k] > 0.0 {
            for d in 0..dim {
                means[k * dim + d] /= counts[k];
            }
        } else {
            means[k * dim..(k + 1) * dim].copy_from_slice(&centers[k]);
        }
    }
    for (i, p) in points.iter().enumerate() {
        let k = assign[i];
        for (d, &x) in p.iter().enumerate() {
            let diff = x - means[k * dim + d];
            vars[k * dim + d] += diff * diff;
        }
    }
    for k in 0..nmix {
        for d in 0..dim {
            let v = if counts[k] > 0.0 {
                vars[k * dim + d] / counts[k]
            } else {
                0.0
            };
            vars[k * dim + d] = v.max(VARIANCE_FLOOR);
        }
    }
    Gmm::new(dim, project_weights(&counts), means, vars)
}

/// Flat-start initialization of one character model: every sequence is cut
/// into `nstates` equal parts, and each state's frames are clustered into
/// `nmix` Gaussians by k-means.
pub fn init_model(id: char, nstates: usize, nmix: usize, sequences: &[&[PhogVector]], seed: u64) -> Result<CharHmm> {
    if nstates == 0 || nmix == 0 {
        return Err(Error::InvalidArgument("states and mixtures must be positive".into()));
    }
    if sequences.is_empty() || sequences.iter().any(|s| s.is_empty()) {
        return Err(Error::NoData(alloc::format!("character {id:?}")));
    }
    let mut per_state: Vec<Vec<&[f64]>> = vec![Vec::new(); nstates];
    let mut visits = vec![0usize; nstates];
    for seq in sequences {
        let len = seq.len();
        let mut last = usize::MAX;
        for (t, f) in seq.iter().enumerate() {
            let s = t * nstates / len;
            per_state[s].push(f.as_slice());
            if s != last {
                visits[s] += 1;
                last = s;
            }
        }
    }
    let pooled: Vec<&[f64]> = sequences.iter().flat_map(|s| s.iter().map(PhogVector::as_slice)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((id as u64) << 32));
    let mut states = Vec::with_capacity(nstates);
    let mut self_prob = Vec::with_capacity(nstates);
    for s in 0..nstates {
        let pts = if per_state[s].is_empty() { &pooled } else { &per_state[s] };
        states.push(fit_gmm(pts, nmix, &mut rng)?);
        let frames = per_state[s].len() as f64;
        let p = if frames > 0.0 {
            (frames - visits[s] as f64) / frames
        } else {
            0.5
        };
        self_prob.push(p.clamp(0.1, 0.9));
    }
    CharHmm::new(id, states, self_prob)
}

#[derive(Debug, Clone, PartialEq)]
struct StateAcc {
    occ: Vec<f64>,
    sum: Vec<f64>,
    sumsq: Vec<f64>,
    stay: f64,
    leave: f64,
}

impl StateAcc {
    fn new(nmix: usize, dim: usize) -> Self {
        StateAcc {
            occ: vec![0.0; nmix],
            sum: vec![0.0; nmix * dim],
            sumsq: vec![0.0; nmix * dim],
            stay: 0.0,
            leave: 0.0,
        }
    }

    fn merge(&mut self, other: &StateAcc) {
        for (a, b) in self.occ.iter_mut().zip(&other.occ) {
            *a += b;
        }
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sumsq.iter_mut().zip(&other.sumsq) {
            *a += b;
        }
        self.stay += other.stay;
        self.leave += other.leave;
    }
}

/// Sufficient statistics of one E-step. Accumulators combine associatively;
/// merge them in a fixed order for reproducible results.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Accumulator {
    chars: BTreeMap<char, Vec<StateAcc>>,
    pub log_likelihood: f64,
    pub frames: usize,
    pub used: usize,
    pub skipped: usize,
}

impl Accumulator {
    pub fn merge(&mut self, other: Accumulator) {
        for (c, states) in other.chars {
            match self.chars.get_mut(&c) {
                Some(mine) => {
                    for (a, b) in mine.iter_mut().zip(&states) {
                        a.merge(b);
                    }
                }
                None => {
                    self.chars.insert(c, states);
                }
            }
        }
        self.log_likelihood += other.log_likelihood;
        self.frames += other.frames;
        self.used += other.used;
        self.skipped += other.skipped;
    }

    fn add_sequence(&mut self, set: &HmmSet, frames: &[PhogVector], chars: &[char]) -> Result<()> {
        let word = set.word_model(chars)?;
        let mut flat: Vec<(&CharHmm, usize, bool)> = Vec::new();
        for &c in &word.chars {
            let m = set.get(c).expect("validated");
            for s in 0..m.n_states() {
                flat.push((m, s, s == 0));
            }
        }
        let n = flat.len();
        let t_len = frames.len();
        if t_len < n {
            self.skipped += 1;
            return Ok(());
        }
        let dim = set.dim();
        if let Some(f) = frames.iter().find(|f| f.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: f.len(),
            });
        }
        let inter = set.inter_cost();
        let nmix = flat.iter().map(|(m, s, _)| m.states[*s].n_components()).max().unwrap_or(1);
        // component log densities and state emissions, restricted to the band
        // of (t, k) pairs that lie on some complete path
        let band = |t: usize| ((n + t).saturating_sub(t_len), t.min(n - 1));
        let mut comp = vec![f64::NEG_INFINITY; t_len * n * nmix];
        let mut emis = vec![f64::NEG_INFINITY; t_len * n];
        for t in 0..t_len {
            let (lo, hi) = band(t);
            for k in lo..=hi {
                let (m, s, _) = flat[k];
                let g = &m.states[s];
                let out = &mut comp[(t * n + k) * nmix..(t * n + k) * nmix + g.n_components()];
                g.component_log_densities(frames[t].as_slice(), out);
                emis[t * n + k] = math::log_sum_exp(out);
            }
        }
        let trans_in = |k: usize| -> f64 {
            let (pm, ps, _) = flat[k - 1];
            let v = pm.log_next(ps);
            if flat[k].2 {
                v + inter
            } else {
                v
            }
        };
        let mut alpha = vec![f64::NEG_INFINITY; t_len * n];
        alpha[0] = inter + emis[0];
        for t in 1..t_len {
            let (lo, hi) = band(t);
            for k in lo..=hi {
                let (m, s, _) = flat[k];
                let stay = alpha[(t - 1) * n + k] + m.log_self(s);
                let mv = if k > 0 {
                    alpha[(t - 1) * n + k - 1] + trans_in(k)
                } else {
                    f64::NEG_INFINITY
                };
                alpha[t * n + k] = math::log_add(stay, mv) + emis[t * n + k];
            }
        }
        let (lm, ls, _) = flat[n - 1];
        let ll = alpha[(t_len - 1) * n + n - 1] + lm.log_next(ls);
        if !ll.is_finite() {
            self.skipped += 1;
            return Ok(());
        }
        let mut beta = vec![f64::NEG_INFINITY; t_len * n];
        beta[(t_len - 1) * n + n - 1] = lm.log_next(ls);
        for t in (0..t_len - 1).rev() {
            let (lo, hi) = band(t);
            for k in lo..=hi {
                let (m, s, _) = flat[k];
                let stay = m.log_self(s) + emis[(t + 1) * n + k] + beta[(t + 1) * n + k];
                let mv = if k + 1 < n {
                    trans_in(k + 1) + emis[(t + 1) * n + k + 1] + beta[(t + 1) * n + k + 1]
                } else {
                    f64::NEG_INFINITY
                };
                beta[t * n + k] = math::log_add(stay, mv);
            }
        }

        for &c in &word.chars {
            let m = set.get(c).expect("validated");
            self.chars.entry(c).or_insert_with(|| {
                m.states
                    .iter()
                    .map(|g| StateAcc::new(g.n_components(), dim))
                    .collect()
            });
        }
        for t in 0..t_len {
            let (lo, hi) = band(t);
            let x = frames[t].as_slice();
            for k in lo..=hi {
                let (m, s, _) = flat[k];
                let lg = alpha[t * n + k] + beta[t * n + k] - ll;
                let gamma = math::exp(lg);
                let acc = &mut self.chars.get_mut(&m.id).expect("inserted")[s];
                if t + 1 < t_len {
                    acc.stay += math::exp(alpha[t * n + k] + m.log_self(s) + emis[(t + 1) * n + k] + beta[(t + 1) * n + k] - ll);
                    if k + 1 < n {
                        acc.leave += math::exp(
                            alpha[t * n + k] + trans_in(k + 1) + emis[(t + 1) * n + k + 1] + beta[(t + 1) * n + k + 1] - ll,
                        );
                    }
                } else if k == n - 1 {
                    acc.leave += gamma;
                }
                if gamma == 0.0 {
                    continue;
                }
                let g = &m.states[s];
                let e = emis[t * n + k];
                for mix in 0..g.n_components() {
                    let post = gamma * math::exp(comp[(t * n + k) * nmix + mix] - e);
                    if post == 0.0 {
                        continue;
                    }
                    acc.occ[mix] += post;
                    let sum = &mut acc.sum[mix * dim..(mix + 1) * dim];
                    for (a, &v) in sum.iter_mut().zip(x) {
                        *a += post * v;
                    }
                    let sumsq = &mut acc.sumsq[mix * dim..(mix + 1) * dim];
                    for (a, &v) in sumsq.iter_mut().zip(x) {
                        *a += post * v * v;
                    }
                }
            }
        }
        self.log_likelihood += ll;
        self.frames += t_len;
        self.used += 1;
        Ok(())
    }
}

/// E-step over a slice of `(frames, transcription)` pairs, folded in order.
pub fn accumulate(set: &HmmSet, pairs: &[(&[PhogVector], &[char])]) -> Result<Accumulator> {
    let mut acc = Accumulator::default();
    for (frames, chars) in pairs {
        acc.add_sequence(set, frames, chars)?;
    }
    Ok(acc)
}

/// M-step: the constrained maximum-likelihood update (variance floor,
/// mixture-weight floor, transition floor). Statistics-free states and
/// components keep their parameters.
pub fn m_step(set: &HmmSet, acc: &Accumulator) -> Result<HmmSet> {
    let mut models = Vec::with_capacity(set.len());
    for model in set.models() {
        let Some(stats) = acc.chars.get(&model.id) else {
            models.push(model.clone());
            continue;
        };
        let mut states = Vec::with_capacity(model.n_states());
        let mut self_prob = Vec::with_capacity(model.n_states());
        for (s, g) in model.states.iter().enumerate() {
            let st = &stats[s];
            let total: f64 = st.occ.iter().sum();
            if total > 0.0 {
                let d = g.dim;
                let mut means = g.means.clone();
                let mut vars = g.vars.clone();
                for mix in 0..g.n_components() {
                    let occ = st.occ[mix];
                    if occ <= 0.0 {
                        continue;
                    }
                    for i in 0..d {
                        let mean = st.sum[mix * d + i] / occ;
                        let var = st.sumsq[mix * d + i] / occ - mean * mean;
                        means[mix * d + i] = mean;
                        vars[mix * d + i] = var.max(VARIANCE_FLOOR);
                    }
                }
                states.push(Gmm::new(d, project_weights(&st.occ), means, vars)?);
            } else {
                states.push(g.clone());
            }
            let out = st.stay + st.leave;
            self_prob.push(if out > 0.0 {
                (st.stay / out).clamp(TRANSITION_FLOOR, 1.0 - TRANSITION_FLOOR)
            } else {
                model.self_prob[s]
            });
        }
        models.push(CharHmm::new(model.id, states, self_prob)?);
    }
    HmmSet::new(set.script_id.clone(), set.geometry, models)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub set: HmmSet,
    /// Data log-likelihood at the start of each iteration.
    pub trace: Vec<f64>,
    /// Training pairs too short for their word model.
    pub skipped: usize,
}

/// Embedded Baum-Welch re-estimation over concatenated word models.
pub fn baum_welch(
    set: &HmmSet,
    training: &[(&[PhogVector], &[char])],
    iterations: usize,
    min_improvement: f64,
) -> Result<TrainOutcome> {
    baum_welch_with(set, training, iterations, min_improvement, |set, chunks| {
        let mut total = Accumulator::default();
        for chunk in chunks {
            total.merge(accumulate(set, chunk)?);
        }
        Ok(total)
    })
}

/// Baum-Welch with a caller-supplied E-step over [`EM_CHUNK`]-sized chunks.
/// `e_step` must return the chunk accumulators merged in chunk order.
pub fn baum_welch_with<F>(
    set: &HmmSet,
    training: &[(&[PhogVector], &[char])],
    iterations: usize,
    min_improvement: f64,
    mut e_step: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&HmmSet, &[&[(&[PhogVector], &[char])]]) -> Result<Accumulator>,
{
    if iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be at least 1".into()));
    }
    if training.is_empty() {
        return Err(Error::NoData("no training sequences".into()));
    }
    let chunks: Vec<&[(&[PhogVector], &[char])]> = training.chunks(EM_CHUNK).collect();
    let mut current = set.clone();
    let mut trace = Vec::with_capacity(iterations);
    let mut skipped = 0;
    for _ in 0..iterations {
        let acc = e_step(&current, &chunks)?;
        skipped = acc.skipped;
        if acc.used == 0 {
            return Err(Error::NoData("every training sequence is too short".into()));
        }
        let ll = acc.log_likelihood;
        let stop = trace.last().is_some_and(|&prev: &f64| ll - prev < min_improvement);
        trace.push(ll);
        if stop {
            break;
        }
        current = m_step(&current, &acc)?;
    }
    Ok(TrainOutcome {
        set: current,
        trace,
        skipped,
    })
}

/// Flat start: each training sequence is split evenly among the characters
/// of its transcription, and every character model is initialized from its
/// share of frames.
pub fn flat_start(
    script_id: &str,
    geometry: WindowGeometry,
    training: &[(&[PhogVector], &[char])],
    config: &TrainConfig,
) -> Result<HmmSet> {
    let mut segments: BTreeMap<char, Vec<&[PhogVector]>> = BTreeMap::new();
    for (frames, chars) in training {
        if chars.is_empty() {
            return Err(Error::EmptyWord);
        }
        let t_len = frames.len();
        let n = chars.len();
        for (i, &c) in chars.iter().enumerate() {
            let (a, b) = (i * t_len / n, (i + 1) * t_len / n);
            let entry = segments.entry(c).or_default();
            if b > a {
                entry.push(&frames[a..b]);
            }
        }
    }
    let mut models = Vec::with_capacity(segments.len());
    for (c, segs) in &segments {
        if segs.is_empty() {
            return Err(Error::NoData(alloc::format!("character {c:?} has no frames")));
        }
        models.push(init_model(*c, config.states, config.mixtures, segs, config.seed)?);
    }
    HmmSet::new(script_id, geometry, models)
}

/// Flat start plus Baum-Welch.
pub fn train(
    script_id: &str,
    geometry: WindowGeometry,
    training: &[(&[PhogVector], &[char])],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let init = flat_start(script_id, geometry, training, config)?;
    baum_welch(&init, training, config.iterations, config.min_improvement)
}
