use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xlhwr_core::ghmm::{accumulate, baum_welch, m_step, train, CharHmm, Gmm, HmmSet, TrainConfig};
use xlhwr_core::phog::{PhogVector, WindowGeometry};

/// Allowed per-iteration decrease of the total log-likelihood.
const MONOTONE_TOL: f64 = 1e-6;

fn sequences(seed: u64, n: usize) -> Vec<(Vec<PhogVector>, Vec<char>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = [('a', [0.0, 0.0, 1.0]), ('b', [2.0, -1.0, 0.0]), ('c', [-1.5, 1.5, 0.5])];
    (0..n)
        .map(|_| {
            let len = rng.random_range(1..=3);
            let mut chars = Vec::new();
            let mut frames = Vec::new();
            for _ in 0..len {
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

#[test]
fn baum_welch_is_monotone() {
    for seed in 0..4 {
        let data = sequences(seed, 30);
        let pairs: Vec<(&[PhogVector], &[char])> = data.iter().map(|(f, c)| (&f[..], &c[..])).collect();
        let config = TrainConfig {
            states: 3,
            mixtures: 2,
            iterations: 12,
            seed,
            min_improvement: f64::NEG_INFINITY,
        };
        let out = train("em", WindowGeometry::default(), &pairs, &config).unwrap();
        assert_eq!(out.trace.len(), 12);
        for w in out.trace.windows(2) {
            assert!(w[1] >= w[0] - MONOTONE_TOL, "seed {seed}: {:?}", out.trace);
        }
    }
}

#[test]
fn one_state_one_gaussian_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let seqs: Vec<Vec<PhogVector>> = (0..5)
        .map(|_| {
            (0..rng.random_range(3..8))
                .map(|_| PhogVector::new(vec![rng.random_range(-2.0..3.0), rng.random_range(0.0..1.0)]))
                .collect()
        })
        .collect();
    let g = Gmm::new(2, vec![1.0], vec![0.3, -0.2], vec![1.0, 2.0]).unwrap();
    let set = HmmSet::new("x", WindowGeometry::default(), vec![CharHmm::new('x', vec![g], vec![0.5]).unwrap()]).unwrap();
    let word = ['x'];
    let pairs: Vec<(&[PhogVector], &[char])> = seqs.iter().map(|f| (&f[..], &word[..])).collect();
    let next = m_step(&set, &accumulate(&set, &pairs).unwrap()).unwrap();

    let all: Vec<&PhogVector> = seqs.iter().flatten().collect();
    let n = all.len() as f64;
    let est = &next.get('x').unwrap().states()[0];
    for d in 0..2 {
        let mean = all.iter().map(|v| v.as_slice()[d]).sum::<f64>() / n;
        let var = all.iter().map(|v| (v.as_slice()[d] - mean).powi(2)).sum::<f64>() / n;
        assert!((est.means()[d] - mean).abs() < 1e-9);
        assert!((est.vars()[d] - var).abs() < 1e-9);
    }
    // every frame but the last of each sequence is a self transition
    let stays: usize = seqs.iter().map(|s| s.len() - 1).sum();
    let p = next.get('x').unwrap().self_probs()[0];
    assert!((p - stays as f64 / n).abs() < 1e-9);
}

#[test]
fn early_stop_records_the_last_likelihood() {
    let data = sequences(11, 20);
    let pairs: Vec<(&[PhogVector], &[char])> = data.iter().map(|(f, c)| (&f[..], &c[..])).collect();
    let config = TrainConfig {
        states: 2,
        mixtures: 1,
        iterations: 50,
        seed: 1,
        min_improvement: 1e-3,
    };
    let out = train("em", WindowGeometry::default(), &pairs, &config).unwrap();
    assert!(out.trace.len() < 50);
    let again = baum_welch(&out.set, &pairs, 1, 0.0).unwrap();
    // the returned set is the one whose likelihood was recorded last
    assert_eq!(again.trace[0], *out.trace.last().unwrap());
}
