//! Particle-based entropy rewards: each embedded transition is scored by the
//! distance to its k nearest neighbors inside the current minibatch, so the
//! batch itself is the particle set and the query is excluded from its own
//! neighborhood by index.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::TensorBuf;

/// How per-row kNN distances turn into a reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyForm {
    /// log(1 + mean of the k distances). Bounded below by zero; the default.
    Log1pMean,
    /// Mean of log distances, each clamped below at 1e-12.
    MeanLog,
}

/// Distances from `query` to its k nearest rows of `set`, ascending.
/// `exclude` removes one row by index (the query itself when it is a member
/// of the set).
pub fn knn_distances(
    set: &TensorBuf,
    query: &[f64],
    exclude: Option<usize>,
    k: usize,
) -> Result<Vec<f64>> {
    let n = set.rows();
    if query.len() != set.cols() {
        return Err(Error::Contract(format!(
            "query width {} does not match set width {}",
            query.len(),
            set.cols()
        )));
    }
    let available = n - usize::from(exclude.map_or(false, |e| e < n));
    if k == 0 || k > available {
        return Err(Error::Contract(format!(
            "k {k} out of range for {available} available neighbors"
        )));
    }
    let mut dists = Vec::with_capacity(available);
    for j in 0..n {
        if exclude == Some(j) {
            continue;
        }
        dists.push(math::sqrt(math::dist2(query, set.row(j))));
    }
    // Partial selection of the k smallest, then order them ascending.
    if k < dists.len() {
        dists.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).expect("finite distances"));
        dists.truncate(k);
    }
    dists.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    Ok(dists)
}

/// Per-row particle entropy rewards over a batch of embeddings. Row i is
/// scored against every other row of the same batch.
pub fn particle_entropy_reward(
    embeddings: &TensorBuf,
    k: usize,
    form: EntropyForm,
) -> Result<Vec<f64>> {
    let n = embeddings.rows();
    if n < 2 {
        return Err(Error::Contract(format!(
            "particle entropy needs at least 2 rows, got {n}"
        )));
    }
    embeddings.check_finite("entropy embeddings")?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let dists = knn_distances(embeddings, embeddings.row(i), Some(i), k)?;
        out.push(reward_from_distances(&dists, form));
    }
    Ok(out)
}

/// Reward for one row given its ascending neighbor distances.
pub fn reward_from_distances(dists: &[f64], form: EntropyForm) -> f64 {
    debug_assert!(!dists.is_empty());
    match form {
        EntropyForm::Log1pMean => {
            let mut s = 0.0;
            for &d in dists {
                s += d;
            }
            math::ln_1p(s / dists.len() as f64)
        }
        EntropyForm::MeanLog => {
            let mut s = 0.0;
            for &d in dists {
                s += math::ln(d.max(1e-12));
            }
            s / dists.len() as f64
        }
    }
}

/// Divides intrinsic rewards by a running mean of their magnitude
/// (exponential window). The first batch primes the mean directly, so a
/// constant positive stream normalizes to exactly 1 from the start.
#[derive(Debug, Clone)]
pub struct RewardNormalizer {
    decay: f64,
    mean_abs: f64,
    primed: bool,
}

impl RewardNormalizer {
    pub fn new(decay: f64) -> Self {
        RewardNormalizer {
            decay,
            mean_abs: 0.0,
            primed: false,
        }
    }

    pub fn running_mean(&self) -> f64 {
        self.mean_abs
    }

    /// Serializable state: (running mean of |r|, primed flag).
    pub fn state(&self) -> (f64, bool) {
        (self.mean_abs, self.primed)
    }

    pub fn restore(decay: f64, mean_abs: f64, primed: bool) -> Self {
        RewardNormalizer {
            decay,
            mean_abs,
            primed,
        }
    }

    pub fn apply(&mut self, rewards: &mut [f64]) {
        if rewards.is_empty() {
            return;
        }
        let mut batch_mean = 0.0;
        for &r in rewards.iter() {
            batch_mean += math::abs(r);
        }
        batch_mean /= rewards.len() as f64;
        self.mean_abs = if self.primed {
            self.decay * self.mean_abs + (1.0 - self.decay) * batch_mean
        } else {
            self.primed = true;
            batch_mean
        };
        let denom = self.mean_abs.max(1e-8);
        for r in rewards.iter_mut() {
            *r /= denom;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;
    use alloc::vec;

    #[test]
    fn hand_case_two_neighbors() {
        // points 0, 1, 3 on a line; query is the first: distances {1, 3}
        let set = TensorBuf::matrix(3, 1, vec![0.0, 1.0, 3.0]).unwrap();
        let d = knn_distances(&set, &[0.0], Some(0), 2).unwrap();
        assert_eq!(d, vec![1.0, 3.0]);
        let r = reward_from_distances(&d, EntropyForm::Log1pMean);
        assert!((r - math::ln(3.0)).abs() < 1e-12, "log1p(2) = ln 3, got {r}");
        let r = reward_from_distances(&d, EntropyForm::MeanLog);
        assert!((r - math::ln(3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn query_is_excluded_from_its_own_neighborhood() {
        let set = TensorBuf::matrix(2, 1, vec![0.0, 2.0]).unwrap();
        let r = particle_entropy_reward(&set, 1, EntropyForm::Log1pMean).unwrap();
        // nearest neighbor of each point is the other one, never itself
        assert!((r[0] - math::ln(3.0)).abs() < 1e-12);
        assert!((r[1] - math::ln(3.0)).abs() < 1e-12);
    }

    #[test]
    fn k_and_size_preconditions() {
        let set = TensorBuf::matrix(3, 2, vec![0.0; 6]).unwrap();
        assert!(knn_distances(&set, &[0.0, 0.0], Some(0), 3).is_err());
        assert!(knn_distances(&set, &[0.0, 0.0], None, 3).is_ok());
        assert!(knn_distances(&set, &[0.0, 0.0], None, 0).is_err());
        let tiny = TensorBuf::matrix(1, 2, vec![0.0; 2]).unwrap();
        assert!(particle_entropy_reward(&tiny, 1, EntropyForm::Log1pMean).is_err());
    }

    #[test]
    fn duplicate_points_clamp_in_literal_form() {
        let set = TensorBuf::matrix(2, 1, vec![5.0, 5.0]).unwrap();
        let r = particle_entropy_reward(&set, 1, EntropyForm::MeanLog).unwrap();
        assert!((r[0] - math::ln(1e-12)).abs() < 1e-9);
        let r = particle_entropy_reward(&set, 1, EntropyForm::Log1pMean).unwrap();
        assert_eq!(r[0], 0.0);
    }

    #[test]
    fn scaling_points_up_never_decreases_rewards() {
        let mut rng = SeedTree::new(31).stream("pts");
        let rows: Vec<Vec<f64>> = (0..40).map(|_| rng.uniform_vec(4, -1.0, 1.0)).collect();
        let set = TensorBuf::from_rows(&rows).unwrap();
        let scaled =
            TensorBuf::from_rows(&rows.iter().map(|r| r.iter().map(|v| v * 2.5).collect()).collect::<Vec<_>>())
                .unwrap();
        for form in [EntropyForm::Log1pMean, EntropyForm::MeanLog] {
            let base = particle_entropy_reward(&set, 5, form).unwrap();
            let up = particle_entropy_reward(&scaled, 5, form).unwrap();
            for (b, u) in base.iter().zip(&up) {
                assert!(u >= b, "scaling decreased a reward: {b} -> {u}");
            }
        }
    }

    #[test]
    fn rewards_are_permutation_stable() {
        let mut rng = SeedTree::new(32).stream("pts");
        let rows: Vec<Vec<f64>> = (0..16).map(|_| rng.uniform_vec(3, -2.0, 2.0)).collect();
        let base = particle_entropy_reward(&TensorBuf::from_rows(&rows).unwrap(), 4, EntropyForm::Log1pMean)
            .unwrap();
        let mut perm: Vec<usize> = (0..rows.len()).collect();
        perm.reverse();
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let out = particle_entropy_reward(&TensorBuf::from_rows(&shuffled).unwrap(), 4, EntropyForm::Log1pMean)
            .unwrap();
        for (slot, &src) in perm.iter().enumerate() {
            assert_eq!(out[slot].to_bits(), base[src].to_bits());
        }
    }

    #[test]
    fn matches_full_sort_oracle_bitwise() {
        let mut rng = SeedTree::new(33).stream("pts");
        for &(n, k) in &[(8usize, 1usize), (33, 5), (77, 12)] {
            let rows: Vec<Vec<f64>> = (0..n).map(|_| rng.uniform_vec(6, -3.0, 3.0)).collect();
            let set = TensorBuf::from_rows(&rows).unwrap();
            for form in [EntropyForm::Log1pMean, EntropyForm::MeanLog] {
                let got = particle_entropy_reward(&set, k, form).unwrap();
                for i in 0..n {
                    // oracle: full pairwise row, complete sort, first k
                    let mut all: Vec<f64> = (0..n)
                        .filter(|&j| j != i)
                        .map(|j| math::sqrt(math::dist2(&rows[i], &rows[j])))
                        .collect();
                    all.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
                    let want = reward_from_distances(&all[..k], form);
                    assert_eq!(got[i].to_bits(), want.to_bits(), "row {i} n {n} k {k}");
                }
            }
        }
    }

    #[test]
    fn constant_stream_normalizes_to_one() {
        let mut norm = RewardNormalizer::new(0.99);
        for _ in 0..10 {
            let mut r = vec![0.7; 8];
            norm.apply(&mut r);
            assert!(r.iter().all(|&v| (v - 1.0).abs() < 1e-12), "{r:?}");
        }
        assert!((norm.running_mean() - 0.7).abs() < 1e-12);
    }
}
