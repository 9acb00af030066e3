//! Two-level mini-batching.
//!
//! Particle batches come from a remainder-carrying permutation scheduler:
//! leftover indices from the previous cycle are served first, then a fresh
//! uniform permutation is appended, so over time every particle is scheduled
//! the same number of times (never differing by more than one).
//!
//! Data batches are uniform index subsets drawn without replacement; averaging
//! per-sample losses over such a subset is an unbiased estimate of the full
//! loss.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{CboError, Result};
use crate::objective::Objective;

/// Scheduler state: the carried remainder of the running permutation cycle.
#[derive(Debug, Clone)]
pub struct BatchPlan {
    remainder: Vec<usize>,
    n_particles: usize,
    batch_size: usize,
}

impl BatchPlan {
    pub fn new(n_particles: usize, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(CboError::InvalidConfig("batch size must be >= 1".into()));
        }
        if batch_size > n_particles {
            return Err(CboError::InvalidConfig(format!(
                "batch size {batch_size} exceeds particle count {n_particles}"
            )));
        }
        Ok(Self {
            remainder: Vec::new(),
            n_particles,
            batch_size,
        })
    }

    pub fn remainder(&self) -> &[usize] {
        &self.remainder
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Appends a fresh permutation after the carried remainder, cuts
    /// `floor((N + |remainder|) / M)` batches of size `M`, and keeps the tail
    /// as the next remainder.
    pub fn next_batches<R: Rng>(&mut self, rng: &mut R) -> Vec<Vec<usize>> {
        let mut list = std::mem::take(&mut self.remainder);
        let mut perm: Vec<usize> = (0..self.n_particles).collect();
        perm.shuffle(rng);
        list.extend(perm);

        let q = list.len() / self.batch_size;
        let mut batches = Vec::with_capacity(q);
        for theta in 0..q {
            batches.push(list[theta * self.batch_size..(theta + 1) * self.batch_size].to_vec());
        }
        self.remainder = list[q * self.batch_size..].to_vec();
        batches
    }
}

/// A set of distinct sample indices used for one loss estimate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataBatch {
    pub indices: Vec<usize>,
}

/// Draws `m` distinct indices from `0..n`, uniform over all m-subsets.
pub fn sample_data_batch<R: Rng>(n: usize, m: usize, rng: &mut R) -> Result<DataBatch> {
    if m == 0 {
        return Err(CboError::InvalidConfig("data batch size must be >= 1".into()));
    }
    if m > n {
        return Err(CboError::InvalidConfig(format!(
            "data batch size {m} exceeds sample count {n}"
        )));
    }
    Ok(DataBatch {
        indices: rand::seq::index::sample(rng, n, m).into_vec(),
    })
}

/// Mini-batch loss estimate: the mean of the per-sample losses over the batch.
pub fn minibatch_loss(obj: &dyn Objective, x: &[f64], batch: &DataBatch) -> Result<f64> {
    if obj.n_samples() == 0 {
        return Err(CboError::Unsupported(
            "mini-batch loss requires a finite-sum objective",
        ));
    }
    let sum: f64 = batch.indices.iter().map(|&i| obj.eval_sample(x, i)).sum();
    Ok(sum / batch.indices.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::scheduler_rng;
    use crate::objective::Objective;

    struct TableObjective {
        values: Vec<f64>,
    }

    impl Objective for TableObjective {
        fn dim(&self) -> usize {
            1
        }
        fn eval_full(&self, _x: &[f64]) -> f64 {
            self.values.iter().sum::<f64>() / self.values.len() as f64
        }
        fn n_samples(&self) -> usize {
            self.values.len()
        }
        fn eval_sample(&self, _x: &[f64], i: usize) -> f64 {
            self.values[i]
        }
    }

    #[test]
    fn remainder_mechanics_match_floor_counts() {
        let mut rng = scheduler_rng(1);
        let mut plan = BatchPlan::new(5, 2).unwrap();
        let b = plan.next_batches(&mut rng);
        assert_eq!(b.len(), 2);
        assert_eq!(plan.remainder().len(), 1);
        let b = plan.next_batches(&mut rng);
        assert_eq!(b.len(), 3);
        assert_eq!(plan.remainder().len(), 0);
    }

    #[test]
    fn full_batch_is_a_permutation() {
        let mut rng = scheduler_rng(2);
        let mut plan = BatchPlan::new(6, 6).unwrap();
        let b = plan.next_batches(&mut rng);
        assert_eq!(b.len(), 1);
        let mut indices = b[0].clone();
        indices.sort_unstable();
        assert_eq!(indices, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn epoch_exactness_counts_stay_balanced() {
        // Membership counts across indices never differ by more than 1.
        let mut rng = scheduler_rng(3);
        let mut plan = BatchPlan::new(7, 3).unwrap();
        let mut counts = vec![0usize; 7];
        for _ in 0..50 {
            for batch in plan.next_batches(&mut rng) {
                for &j in &batch {
                    counts[j] += 1;
                }
            }
            let lo = *counts.iter().min().unwrap();
            let hi = *counts.iter().max().unwrap();
            assert!(hi - lo <= 1, "counts drifted apart: {counts:?}");
        }
    }

    #[test]
    fn remainder_never_duplicates() {
        let mut rng = scheduler_rng(4);
        let mut plan = BatchPlan::new(10, 4).unwrap();
        for _ in 0..25 {
            plan.next_batches(&mut rng);
            let mut r = plan.remainder().to_vec();
            let before = r.len();
            r.sort_unstable();
            r.dedup();
            assert_eq!(r.len(), before);
            assert!(plan.remainder().len() < 4);
        }
    }

    #[test]
    fn invalid_sizes_are_config_errors() {
        assert!(BatchPlan::new(5, 6).is_err());
        assert!(BatchPlan::new(5, 0).is_err());
    }

    #[test]
    fn determinism_same_seed_same_batches() {
        let mut a = scheduler_rng(77);
        let mut b = scheduler_rng(77);
        let mut plan_a = BatchPlan::new(9, 2).unwrap();
        let mut plan_b = BatchPlan::new(9, 2).unwrap();
        for _ in 0..10 {
            assert_eq!(plan_a.next_batches(&mut a), plan_b.next_batches(&mut b));
        }
    }

    #[test]
    fn data_batch_full_draw_is_permutation() {
        let mut rng = scheduler_rng(5);
        let b = sample_data_batch(6, 6, &mut rng).unwrap();
        let mut indices = b.indices.clone();
        indices.sort_unstable();
        assert_eq!(indices, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn data_batch_single_draw_frequencies_are_uniform() {
        let mut rng = scheduler_rng(6);
        let draws = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            let b = sample_data_batch(4, 1, &mut rng).unwrap();
            counts[b.indices[0]] += 1;
        }
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.25).abs() < 0.01, "frequency {freq}");
        }
    }

    #[test]
    fn data_batch_pairs_are_valid_two_subsets() {
        let mut rng = scheduler_rng(7);
        for _ in 0..200 {
            let b = sample_data_batch(4, 2, &mut rng).unwrap();
            assert_eq!(b.indices.len(), 2);
            assert_ne!(b.indices[0], b.indices[1]);
            assert!(b.indices.iter().all(|&i| i < 4));
        }
    }

    #[test]
    fn data_batch_rejects_oversized_request() {
        let mut rng = scheduler_rng(8);
        assert!(sample_data_batch(4, 5, &mut rng).is_err());
        assert!(sample_data_batch(4, 0, &mut rng).is_err());
    }

    #[test]
    fn minibatch_loss_is_subset_mean() {
        let obj = TableObjective {
            values: vec![1.0, 2.0, 3.0, 4.0],
        };
        let batch = DataBatch {
            indices: vec![0, 1],
        };
        assert_eq!(minibatch_loss(&obj, &[0.0], &batch).unwrap(), 1.5);
    }

    #[test]
    fn minibatch_loss_enumeration_is_unbiased() {
        // Average over all C(4, 2) subsets equals the full loss exactly.
        let obj = TableObjective {
            values: vec![1.0, 2.0, 3.0, 4.0],
        };
        let mut acc = 0.0;
        let mut count = 0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                let batch = DataBatch { indices: vec![i, j] };
                acc += minibatch_loss(&obj, &[0.0], &batch).unwrap();
                count += 1;
            }
        }
        assert_eq!(count, 6);
        assert!((acc / 6.0 - 2.5).abs() < 1e-15);
        assert!((obj.eval_full(&[0.0]) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn full_batch_matches_eval_full() {
        let obj = TableObjective {
            values: vec![0.25, 0.5, 0.75, 1.0, 1.25],
        };
        let batch = DataBatch {
            indices: (0..5).collect(),
        };
        let diff = (minibatch_loss(&obj, &[0.0], &batch).unwrap() - obj.eval_full(&[0.0])).abs();
        assert!(diff <= 1e-12 * 5.0);
    }

    #[test]
    fn minibatch_loss_requires_finite_sum_objective() {
        struct Plain;
        impl Objective for Plain {
            fn dim(&self) -> usize {
                1
            }
            fn eval_full(&self, x: &[f64]) -> f64 {
                x[0] * x[0]
            }
        }
        let batch = DataBatch { indices: vec![0] };
        assert!(matches!(
            minibatch_loss(&Plain, &[1.0], &batch),
            Err(CboError::Unsupported(_))
        ));
    }
}
