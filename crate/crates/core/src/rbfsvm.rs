//! One-vs-one RBF support vector machines trained by SMO.
//!
//! Working-set selection is the maximal violating pair; training stops when
//! the KKT gap drops below the tolerance. Each binary machine treats its
//! first label (lower label order) as the positive class.
//!
//! Inputs are min-max scaled to [-1, 1] per dimension with ranges taken from
//! the training set. Raw PHOG entries are tiny and an inverse-dimension γ
//! would leave the kernel nearly constant.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::phog::{self, PhogVector, PHOG_DIM};
use crate::raster::Component;

pub const DEFAULT_C: f64 = 1.0;
pub const DEFAULT_GAMMA: f64 = 1.0 / PHOG_DIM as f64;
pub const KKT_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: DEFAULT_C,
            gamma: DEFAULT_GAMMA,
            tolerance: KKT_TOLERANCE,
            max_iterations: 1_000_000,
        }
    }
}

#[inline]
fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    math::exp(-gamma * d)
}

/// A binary machine between `labels[pos]` (+1) and `labels[neg]` (−1).
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMachine {
    pub pos: usize,
    pub neg: usize,
    pub support: Vec<Vec<f64>>,
    /// `α_i·y_i` per support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
    /// KKT gap at termination.
    pub gap: f64,
    pub iterations: usize,
}

impl BinaryMachine {
    pub fn decision(&self, gamma: f64, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (sv, &c) in self.support.iter().zip(&self.coef) {
            s += c * rbf(gamma, sv, x);
        }
        s - self.rho
    }
}

/// Trains one binary machine on points with labels `y ∈ {+1, −1}`.
pub fn train_binary(points: &[&[f64]], y: &[f64], params: &SvmParams) -> Result<(Vec<f64>, f64, f64, usize)> {
    let n = points.len();
    if n == 0 || y.len() != n {
        return Err(Error::NoData("binary machine without samples".into()));
    }
    if !(params.c > 0.0) || !(params.gamma > 0.0) {
        return Err(Error::InvalidArgument("C and gamma must be positive".into()));
    }
    let c = params.c;
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = rbf(params.gamma, points[i], points[j]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let q = |i: usize, j: usize| y[i] * y[j] * k[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64| (yi < 0.0 && a < c) || (yi > 0.0 && a > 0.0);
    let mut iterations = 0;
    let mut gap;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if in_low(alpha[t], y[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        gap = if i == usize::MAX || j == usize::MAX { 0.0 } else { gmax - gmin };
        if gap < params.tolerance || iterations >= params.max_iterations {
            break;
        }
        iterations += 1;
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = 1e-12;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = 1e-12;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    let rho = if free > 0 {
        sum / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else {
        lb
    };
    Ok((alpha, rho, gap, iterations))
}

/// Per-dimension affine map `x' = (x - center) * factor`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScale {
    pub center: Vec<f64>,
    pub factor: Vec<f64>,
}

impl FeatureScale {
    pub fn identity(dim: usize) -> Self {
        FeatureScale {
            center: vec![0.0; dim],
            factor: vec![1.0; dim],
        }
    }

    /// Maps each dimension's training range onto [-1, 1]; constant
    /// dimensions map to 0.
    pub fn fit(data: &[(PhogVector, char)]) -> Result<Self> {
        let dim = data.first().map(|(v, _)| v.len()).ok_or_else(|| Error::NoData("no SVM training samples".into()))?;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for (v, _) in data {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            for (j, &x) in v.as_slice().iter().enumerate() {
                lo[j] = lo[j].min(x);
                hi[j] = hi[j].max(x);
            }
        }
        let center = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let factor = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| if b - a > 1e-12 { 2.0 / (b - a) } else { 0.0 })
            .collect();
        Ok(FeatureScale { center, factor })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.center.iter().zip(&self.factor))
            .map(|(v, (c, f))| (v - c) * f)
            .collect()
    }

    /// Scales the feature vectors of a labelled set.
    pub fn apply_all(&self, data: &[(PhogVector, char)]) -> Vec<(PhogVector, char)> {
        data.iter()
            .map(|(v, l)| (PhogVector::new(self.apply(v.as_slice())), *l))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    labels: Vec<char>,
    machines: Vec<BinaryMachine>,
    gamma: f64,
    c: f64,
    dim: usize,
    /// Applied to inputs before the machines; support vectors are stored scaled.
    scale: FeatureScale,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub label: char,
    /// Vote count per label, in label order.
    pub votes: Vec<(char, usize)>,
    /// Labels ranked by (votes, summed winning margin, label order).
    pub ranking: Vec<char>,
    /// Summed decision magnitude of the machines the top label won.
    pub confidence: f64,
}

impl Classification {
    pub fn top2(&self) -> &[char] {
        &self.ranking[..self.ranking.len().min(2)]
    }
}

/// Label set and one-vs-one index pairs for `data`, in training order.
pub fn pair_jobs(data: &[(PhogVector, char)]) -> Result<(Vec<char>, Vec<(usize, usize)>)> {
    if data.is_empty() {
        return Err(Error::NoData("no SVM training samples".into()));
    }
    let mut labels: Vec<char> = data.iter().map(|(_, l)| *l).collect();
    labels.sort_unstable();
    labels.dedup();
    if labels.len() < 2 {
        return Err(Error::SingleClass);
    }
    let dim = data[0].0.len();
    if let Some((v, _)) = data.iter().find(|(v, _)| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    let mut pairs = Vec::new();
    for a in 0..labels.len() {
        for b in a + 1..labels.len() {
            pairs.push((a, b));
        }
    }
    Ok((labels, pairs))
}

/// Trains the machine for one label pair on already scaled data.
pub fn train_pair(
    data: &[(PhogVector, char)],
    labels: &[char],
    pair: (usize, usize),
    params: &SvmParams,
) -> Result<BinaryMachine> {
    let (pos, neg) = pair;
    let mut points = Vec::new();
    let mut y = Vec::new();
    for (v, l) in data {
        if *l == labels[pos] {
            points.push(v.as_slice());
            y.push(1.0);
        } else if *l == labels[neg] {
            points.push(v.as_slice());
            y.push(-1.0);
        }
    }
    let (alpha, rho, gap, iterations) = train_binary(&points, &y, params)?;
    let mut support = Vec::new();
    let mut coef = Vec::new();
    for t in 0..points.len() {
        if alpha[t] > 0.0 {
            support.push(points[t].to_vec());
            coef.push(alpha[t] * y[t]);
        }
    }
    Ok(BinaryMachine {
        pos,
        neg,
        support,
        coef,
        rho,
        gap,
        iterations,
    })
}

pub fn train_svm(data: &[(PhogVector, char)], params: &SvmParams) -> Result<SvmModel> {
    let (labels, pairs) = pair_jobs(data)?;
    let scale = FeatureScale::fit(data)?;
    let scaled = scale.apply_all(data);
    let machines = pairs
        .iter()
        .map(|&p| train_pair(&scaled, &labels, p, params))
        .collect::<Result<Vec<_>>>()?;
    SvmModel::from_parts(labels, machines, params.gamma, params.c, scale)
}

impl SvmModel {
    pub fn from_parts(labels: Vec<char>, machines: Vec<BinaryMachine>, gamma: f64, c: f64, scale: FeatureScale) -> Result<Self> {
        let dim = scale.dim();
        if scale.factor.len() != dim {
            return Err(Error::InvalidArgument("feature scale shape".into()));
        }
        if labels.len() < 2 {
            return Err(Error::SingleClass);
        }
        let expected = labels.len() * (labels.len() - 1) / 2;
        if machines.len() != expected {
            return Err(Error::InvalidArgument("machine count does not match labels".into()));
        }
        for m in &machines {
            if m.pos >= labels.len() || m.neg >= labels.len() || m.pos == m.neg {
                return Err(Error::InvalidArgument("machine label index".into()));
            }
            if m.support.len() != m.coef.len() || m.support.iter().any(|s| s.len() != dim) {
                return Err(Error::InvalidArgument("support vector shape".into()));
            }
        }
        Ok(SvmModel {
            labels,
            machines,
            gamma,
            c,
            dim,
            scale,
        })
    }

    pub fn labels(&self) -> &[char] {
        &self.labels
    }

    pub fn machines(&self) -> &[BinaryMachine] {
        &self.machines
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale(&self) -> &FeatureScale {
        &self.scale
    }

    pub fn max_gap(&self) -> f64 {
        self.machines.iter().map(|m| m.gap).fold(0.0, f64::max)
    }

    pub fn classify(&self, x: &PhogVector) -> Result<Classification> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let x = self.scale.apply(x.as_slice());
        let k = self.labels.len();
        let mut votes = vec![0usize; k];
        let mut margin = vec![0.0f64; k];
        for m in &self.machines {
            let d = m.decision(self.gamma, &x);
            let winner = if d > 0.0 { m.pos } else { m.neg };
            votes[winner] += 1;
            margin[winner] += d.abs();
        }
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            votes[b]
                .cmp(&votes[a])
                .then(margin[b].partial_cmp(&margin[a]).unwrap_or(core::cmp::Ordering::Equal))
                .then(a.cmp(&b))
        });
        Ok(Classification {
            label: self.labels[order[0]],
            confidence: margin[order[0]],
            votes: self.labels.iter().copied().zip(votes).collect(),
            ranking: order.into_iter().map(|i| self.labels[i]).collect(),
        })
    }

    pub fn classify_component(&self, comp: &Component) -> Result<Classification> {
        let v = phog::modifier_features(comp)?;
        self.classify(&v)
    }
}
