//! Property suites over randomized inputs: consensus invariances, batcher
//! exactness, estimator unbiasedness, and seed determinism.

use proptest::prelude::*;

use cbo::batching::{minibatch_loss, sample_data_batch, BatchPlan, DataBatch};
use cbo::consensus::{argmin_consensus, laplace_estimate, weighted_consensus};
use cbo::ensemble::{scheduler_rng, InitSpec};
use cbo::objective::Objective;
use cbo::{run_optimizer, CboParams, ConsensusMode, Scheme, UpdateMode};

fn positions_and_losses() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, usize)> {
    (1usize..6, 1usize..8).prop_flat_map(|(dim, k)| {
        (
            proptest::collection::vec(-50.0..50.0f64, k * dim),
            proptest::collection::vec(-10.0..10.0f64, k),
            Just(dim),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn weighted_consensus_is_shift_invariant((positions, losses, dim) in positions_and_losses(),
                                             shift in -1e3..1e3f64,
                                             beta in 0.01..50.0f64) {
        let base = weighted_consensus(&positions, dim, &losses, beta).unwrap();
        let shifted_losses: Vec<f64> = losses.iter().map(|l| l + shift).collect();
        let shifted = weighted_consensus(&positions, dim, &shifted_losses, beta).unwrap();
        // Rounding the shifted inputs perturbs each loss gap by ~ulp(shift),
        // which beta amplifies in the weights; the tolerance carries that
        // term on top of the 1e-12 dead band.
        let pos_scale = positions.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let tol = 1e-12 + 16.0 * beta * (shift.abs() + 10.0) * f64::EPSILON;
        for (a, b) in base.point.iter().zip(&shifted.point) {
            prop_assert!((a - b).abs() <= tol * pos_scale,
                         "gap {} vs tol {}", (a - b).abs(), tol * pos_scale);
        }
    }

    #[test]
    fn argmin_consensus_is_shift_invariant((positions, losses, dim) in positions_and_losses(),
                                           shift in -1e3..1e3f64) {
        let base = argmin_consensus(&positions, dim, &losses).unwrap();
        let shifted_losses: Vec<f64> = losses.iter().map(|l| l + shift).collect();
        let shifted = argmin_consensus(&positions, dim, &shifted_losses).unwrap();
        prop_assert_eq!(base.point, shifted.point);
    }

    #[test]
    fn consensus_lies_in_convex_hull((positions, losses, dim) in positions_and_losses(),
                                     beta in 0.01..100.0f64) {
        let c = weighted_consensus(&positions, dim, &losses, beta).unwrap();
        let k = losses.len();
        for i in 0..dim {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for j in 0..k {
                lo = lo.min(positions[j * dim + i]);
                hi = hi.max(positions[j * dim + i]);
            }
            prop_assert!(c.point[i] >= lo - 1e-9 && c.point[i] <= hi + 1e-9,
                         "coordinate {i}: {} outside [{lo}, {hi}]", c.point[i]);
        }
    }

    #[test]
    fn small_beta_limit_is_arithmetic_mean((positions, losses, dim) in positions_and_losses()) {
        let c = weighted_consensus(&positions, dim, &losses, 1e-12).unwrap();
        let k = losses.len();
        for i in 0..dim {
            let mean: f64 = (0..k).map(|j| positions[j * dim + i]).sum::<f64>() / k as f64;
            prop_assert!((c.point[i] - mean).abs() <= 1e-9 * mean.abs().max(1.0));
        }
    }

    #[test]
    fn large_beta_limit_matches_argmin((positions, _losses, dim) in positions_and_losses(),
                                       seed in 0u64..1000) {
        // Losses with gaps >= 0.1 so beta = 1e4 resolves the minimum.
        let k = positions.len() / dim;
        let losses: Vec<f64> = (0..k).map(|j| {
            let r = (seed.wrapping_mul(2654435761).wrapping_add(j as u64 * 97)) % 17;
            0.1 * (j as f64) + r as f64
        }).collect();
        let soft = weighted_consensus(&positions, dim, &losses, 1e4).unwrap();
        let hard = argmin_consensus(&positions, dim, &losses).unwrap();
        for (a, b) in soft.point.iter().zip(&hard.point) {
            prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0),
                         "soft {a} vs hard {b}");
        }
    }

    #[test]
    fn laplace_estimate_is_nonincreasing_in_beta(losses in proptest::collection::vec(-5.0..5.0f64, 1..12)) {
        let betas = [0.1, 1.0, 10.0, 100.0, 1000.0];
        let values: Vec<f64> = betas
            .iter()
            .map(|&b| laplace_estimate(&losses, b).unwrap())
            .collect();
        for w in values.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9);
        }
        let min = losses.iter().cloned().fold(f64::INFINITY, f64::min);
        let mean = losses.iter().sum::<f64>() / losses.len() as f64;
        prop_assert!(values[0] <= mean + 1e-9);
        prop_assert!(*values.last().unwrap() >= min - 1e-9);
        // Convergence to the minimum.
        prop_assert!(values.last().unwrap() - min <= (values[0] - min).max(1e-2));
    }

    #[test]
    fn batcher_epoch_counts_stay_within_one(n in 2usize..20, m_off in 1usize..10, seed in 0u64..500, cycles in 1usize..12) {
        let m = 1 + m_off % n;
        let mut rng = scheduler_rng(seed);
        let mut plan = BatchPlan::new(n, m).unwrap();
        let mut counts = vec![0usize; n];
        for _ in 0..cycles {
            for batch in plan.next_batches(&mut rng) {
                prop_assert_eq!(batch.len(), m);
                for &j in &batch {
                    counts[j] += 1;
                }
            }
            let lo = *counts.iter().min().unwrap();
            let hi = *counts.iter().max().unwrap();
            prop_assert!(hi - lo <= 1, "counts {counts:?}");
            prop_assert!(plan.remainder().len() < m);
        }
    }

    #[test]
    fn data_batches_are_distinct_and_in_range(n in 1usize..30, m_off in 0usize..30, seed in 0u64..500) {
        let m = 1 + m_off % n;
        let mut rng = scheduler_rng(seed);
        let batch = sample_data_batch(n, m, &mut rng).unwrap();
        let mut seen = batch.indices.clone();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), m);
        prop_assert!(batch.indices.iter().all(|&i| i < n));
    }
}

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

fn subsets_of_size(n: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    fn rec(start: usize, n: usize, m: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == m {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            current.push(i);
            rec(i + 1, n, m, current, out);
            current.pop();
        }
    }
    rec(0, n, m, &mut current, &mut out);
    out
}

#[test]
fn minibatch_unbiasedness_by_enumeration() {
    // For every n <= 8 and every m, the average of the mini-batch loss over
    // all C(n, m) subsets equals the full loss to 1e-12 relative.
    for n in 1..=8usize {
        let values: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7 - 1.3) * 1.9).collect();
        let obj = TableObjective {
            values: values.clone(),
        };
        let full = obj.eval_full(&[0.0]);
        for m in 1..=n {
            let subsets = subsets_of_size(n, m);
            let total: f64 = subsets
                .iter()
                .map(|s| {
                    minibatch_loss(
                        &obj,
                        &[0.0],
                        &DataBatch {
                            indices: s.clone(),
                        },
                    )
                    .unwrap()
                })
                .sum();
            let avg = total / subsets.len() as f64;
            assert!(
                (avg - full).abs() <= 1e-12 * full.abs().max(1.0),
                "n={n} m={m}: {avg} vs {full}"
            );
        }
    }
}

#[test]
fn full_runs_are_seed_deterministic() {
    let obj = cbo::Quadratic::new(2);
    let mut params = CboParams::new(1.0, 1.5, 20.0, 0.02, 5);
    params.max_iters = 120;
    params.epsilon_stop = 1e-12;
    params.consensus_mode = ConsensusMode::Weighted;
    params.update_mode = UpdateMode::Partial;
    params.scheme = Scheme::Splitting;
    let init = InitSpec::UniformBox { lo: -2.0, hi: 2.0 };

    let a = run_optimizer(&obj, params.clone(), &init, 15, 424242).unwrap();
    let b = run_optimizer(&obj, params.clone(), &init, 15, 424242).unwrap();
    assert_eq!(a.final_consensus, b.final_consensus);
    assert_eq!(a.iterations_used, b.iterations_used);
    assert_eq!(a.trace.len(), b.trace.len());
    for (ta, tb) in a.trace.iter().zip(&b.trace) {
        assert_eq!(ta.consensus, tb.consensus);
    }

    let c = run_optimizer(&obj, params, &init, 15, 424243).unwrap();
    assert_ne!(a.final_consensus, c.final_consensus);
}
