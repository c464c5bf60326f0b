//! Paired permutation (randomization) test.
//!
//! Each trial swaps every `(a_i, b_i)` pair with probability 1/2 and compares the
//! aggregated difference with the observed one. Trials are grouped into fixed
//! blocks of [`TRIALS_PER_STREAM`]; block `j` draws from ChaCha stream `j` of
//! `seed`, so the p-value is identical however the blocks are spread across
//! threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FaithError;

pub const DEFAULT_TRIALS: usize = 100_000;

/// Relative slack when comparing a trial statistic with the observed one, so
/// that mathematically tied statistics that differ only by rounding count as
/// "at least as extreme".
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    /// `|Δ_trial| ≥ |Δ_observed|`.
    #[default]
    TwoSided,
    /// `Δ_trial ≥ Δ_observed`.
    Greater,
}

/// How a list of per-example scores is reduced to one system score.
#[derive(Clone, Copy)]
pub enum Aggregator<'a> {
    Mean,
    Custom(&'a (dyn Fn(&[f64]) -> f64 + Sync)),
}

impl Aggregator<'_> {
    fn apply(&self, xs: &[f64]) -> f64 {
        match self {
            Aggregator::Mean => xs.iter().sum::<f64>() / xs.len() as f64,
            Aggregator::Custom(f) => f(xs),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationOutcome {
    pub p_value: f64,
    /// Observed `agg(A) − agg(B)`.
    pub delta: f64,
    pub exceed: usize,
    pub trials: usize,
    pub seed: u64,
}

/// Consecutive trials that share one random stream.
pub const TRIALS_PER_STREAM: usize = 256;

fn block_rng(base: &ChaCha8Rng, block: usize) -> ChaCha8Rng {
    let mut rng = base.clone();
    rng.set_stream(block as u64);
    rng
}

/// Swap mask for one trial: bit `i` set means pair `i` is swapped.
fn swaps(rng: &mut ChaCha8Rng, mask: &mut [u64]) {
    for w in mask {
        *w = rng.next_u64();
    }
}

fn swapped(mask: &[u64], i: usize) -> bool {
    mask[i / 64] >> (i % 64) & 1 == 1
}

pub fn permutation_test(
    a: &[f64],
    b: &[f64],
    trials: usize,
    seed: u64,
    aggregator: Aggregator<'_>,
    alternative: Alternative,
) -> Result<PermutationOutcome, FaithError> {
    if a.len() != b.len() {
        return Err(FaithError::LengthMismatch { a: a.len(), b: b.len() });
    }
    if a.is_empty() {
        return Err(FaithError::Empty);
    }
    if trials == 0 {
        return Err(FaithError::NoTrials);
    }
    let n = a.len();
    // For the mean, a swap just flips the sign of that pair's difference.
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let statistic = |mask: Option<&[u64]>| -> f64 {
        match aggregator {
            Aggregator::Mean => {
                let s: f64 = diffs.iter().enumerate().map(|(i, d)| if mask.is_some_and(|m| swapped(m, i)) { -d } else { *d }).sum();
                s / n as f64
            }
            Aggregator::Custom(_) => {
                let (mut a2, mut b2) = (a.to_vec(), b.to_vec());
                if let Some(m) = mask {
                    for i in (0..n).filter(|&i| swapped(m, i)) {
                        std::mem::swap(&mut a2[i], &mut b2[i]);
                    }
                }
                aggregator.apply(&a2) - aggregator.apply(&b2)
            }
        }
    };
    let delta = statistic(None);
    let base = ChaCha8Rng::seed_from_u64(seed);
    let tol = TIE_TOLERANCE * delta.abs().max(1.0);
    let extreme = |d: f64| match alternative {
        Alternative::TwoSided => d.abs() >= delta.abs() - tol,
        Alternative::Greater => d >= delta - tol,
    };
    let exceed = (0..trials.div_ceil(TRIALS_PER_STREAM))
        .into_par_iter()
        .map(|block| {
            let mut rng = block_rng(&base, block);
            let mut mask = vec![0u64; n.div_ceil(64)];
            let end = ((block + 1) * TRIALS_PER_STREAM).min(trials);
            (block * TRIALS_PER_STREAM..end)
                .filter(|_| {
                    swaps(&mut rng, &mut mask);
                    extreme(statistic(Some(&mask)))
                })
                .count()
        })
        .sum();
    Ok(PermutationOutcome { p_value: exceed as f64 / trials as f64, delta, exceed, trials, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn identical_scores_give_one() {
        let a: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let r = permutation_test(&a, &a, 2_000, 7, Aggregator::Mean, Alternative::TwoSided).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.delta, 0.0);
    }

    #[test]
    fn constant_gap_is_significant() {
        let a: Vec<f64> = (0..50).map(|i| 0.6 + 0.001 * i as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| x - 0.3).collect();
        let r = permutation_test(&a, &b, 10_000, 1, Aggregator::Mean, Alternative::TwoSided).unwrap();
        assert!(r.p_value < 0.01, "{r:?}");
        assert!((r.delta - 0.3).abs() < 1e-12);
    }

    #[test]
    fn deterministic_and_shard_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..40).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..40).map(|_| rng.random()).collect();
        let r1 = permutation_test(&a, &b, 5_000, 11, Aggregator::Mean, Alternative::TwoSided).unwrap();
        let r2 = permutation_test(&a, &b, 5_000, 11, Aggregator::Mean, Alternative::TwoSided).unwrap();
        assert_eq!(r1, r2);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = pool.install(|| permutation_test(&a, &b, 5_000, 11, Aggregator::Mean, Alternative::TwoSided).unwrap());
        assert_eq!(r1, serial);
    }

    #[test]
    fn custom_mean_matches_fast_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<f64> = (0..25).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..25).map(|_| rng.random::<f64>() * 0.8).collect();
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        for alt in [Alternative::TwoSided, Alternative::Greater] {
            let fast = permutation_test(&a, &b, 3_000, 2, Aggregator::Mean, alt).unwrap();
            let slow = permutation_test(&a, &b, 3_000, 2, Aggregator::Custom(&mean), alt).unwrap();
            assert_eq!(fast.exceed, slow.exceed);
        }
    }

    #[test]
    fn one_sided_direction() {
        let a = vec![0.9; 20];
        let b = vec![0.1; 20];
        let greater = permutation_test(&a, &b, 4_000, 0, Aggregator::Mean, Alternative::Greater).unwrap();
        let reversed = permutation_test(&b, &a, 4_000, 0, Aggregator::Mean, Alternative::Greater).unwrap();
        assert!(greater.p_value < 0.01);
        assert_eq!(reversed.p_value, 1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            permutation_test(&[1.0], &[1.0, 2.0], 10, 0, Aggregator::Mean, Alternative::TwoSided),
            Err(FaithError::LengthMismatch { a: 1, b: 2 })
        ));
        assert!(matches!(permutation_test(&[1.0], &[1.0], 0, 0, Aggregator::Mean, Alternative::TwoSided), Err(FaithError::NoTrials)));
        assert!(matches!(permutation_test(&[], &[], 10, 0, Aggregator::Mean, Alternative::TwoSided), Err(FaithError::Empty)));
    }
}
