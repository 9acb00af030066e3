//! Consensus-point computations.
//!
//! The drift target of the particle system is the Gibbs-weighted average of a
//! batch of positions. All weights are computed relative to the smallest loss
//! in the batch, so arbitrarily sharp inverse temperatures never underflow:
//! `e^{-beta L_j} / sum e^{-beta L_i} = e^{-beta (L_j - L_min)} / sum e^{-beta (L_i - L_min)}`.

use crate::error::{CboError, Result};

/// A computed consensus point together with the indices that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusPoint {
    pub point: Vec<f64>,
    /// `log sum_j e^{-beta L_j}`, reconstructed from the shifted sum.
    pub log_total_weight: f64,
    /// Particle indices the point was computed from.
    pub source_batch: Vec<usize>,
}

fn check_losses(losses: &[f64]) -> Result<()> {
    if losses.is_empty() {
        return Err(CboError::EmptySubset);
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(CboError::NonFinite { what: "loss" });
    }
    Ok(())
}

/// Gibbs-weighted average of the rows of `positions` (flat row-major, `dim`
/// columns) selected by `subset`; `losses[i]` is the loss of row `subset[i]`.
pub fn weighted_consensus_indexed(
    positions: &[f64],
    dim: usize,
    subset: &[usize],
    losses: &[f64],
    beta: f64,
) -> Result<ConsensusPoint> {
    if subset.is_empty() {
        return Err(CboError::EmptySubset);
    }
    if subset.len() != losses.len() {
        return Err(CboError::DimensionMismatch {
            expected: subset.len(),
            got: losses.len(),
        });
    }
    check_losses(losses)?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(CboError::InvalidConfig(format!("beta must be > 0, got {beta}")));
    }

    let min_loss = losses.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut point = vec![0.0; dim];
    let mut total = 0.0;
    for (&j, &loss) in subset.iter().zip(losses) {
        let w = (-beta * (loss - min_loss)).exp();
        total += w;
        let row = &positions[j * dim..(j + 1) * dim];
        for (pi, xi) in point.iter_mut().zip(row) {
            *pi += w * xi;
        }
    }
    let inv = 1.0 / total;
    for pi in &mut point {
        *pi *= inv;
    }

    Ok(ConsensusPoint {
        point,
        log_total_weight: total.ln() - beta * min_loss,
        source_batch: subset.to_vec(),
    })
}

/// Gibbs-weighted average of a dense `k x d` block (all rows participate).
pub fn weighted_consensus(
    positions: &[f64],
    dim: usize,
    losses: &[f64],
    beta: f64,
) -> Result<ConsensusPoint> {
    let subset: Vec<usize> = (0..losses.len()).collect();
    weighted_consensus_indexed(positions, dim, &subset, losses, beta)
}

/// The batch position attaining the lowest loss; ties go to the lowest index.
pub fn argmin_consensus_indexed(
    positions: &[f64],
    dim: usize,
    subset: &[usize],
    losses: &[f64],
) -> Result<ConsensusPoint> {
    if subset.is_empty() {
        return Err(CboError::EmptySubset);
    }
    if subset.len() != losses.len() {
        return Err(CboError::DimensionMismatch {
            expected: subset.len(),
            got: losses.len(),
        });
    }
    check_losses(losses)?;

    let mut best = 0;
    for i in 1..losses.len() {
        if losses[i] < losses[best] {
            best = i;
        }
    }
    let j = subset[best];
    Ok(ConsensusPoint {
        point: positions[j * dim..(j + 1) * dim].to_vec(),
        log_total_weight: -losses[best],
        source_batch: subset.to_vec(),
    })
}

/// Argmin variant over a dense `k x d` block.
pub fn argmin_consensus(positions: &[f64], dim: usize, losses: &[f64]) -> Result<ConsensusPoint> {
    let subset: Vec<usize> = (0..losses.len()).collect();
    argmin_consensus_indexed(positions, dim, &subset, losses)
}

/// Soft-min estimate `-(1/beta) * log( (1/k) sum_j e^{-beta L_j} )`, evaluated
/// in shifted form. Lies between the minimum and the mean of the losses.
pub fn laplace_estimate(losses: &[f64], beta: f64) -> Result<f64> {
    check_losses(losses)?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(CboError::InvalidConfig(format!("beta must be > 0, got {beta}")));
    }
    let min_loss = losses.iter().cloned().fold(f64::INFINITY, f64::min);
    let sum: f64 = losses.iter().map(|l| (-beta * (l - min_loss)).exp()).sum();
    Ok(min_loss - (sum / losses.len() as f64).ln() / beta)
}

/// `log( (1/k) sum_j e^{-beta L_j} )` in shifted form: the log of the mean
/// Gibbs weight of a sample.
pub fn log_mean_weight(losses: &[f64], beta: f64) -> Result<f64> {
    let estimate = laplace_estimate(losses, beta)?;
    Ok(-beta * estimate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn equal_losses_give_midpoint() {
        let c = weighted_consensus(&[0.0, 2.0], 1, &[7.0, 7.0], 30.0).unwrap();
        assert!(close(c.point[0], 1.0, 1e-12));
    }

    #[test]
    fn tiny_beta_approaches_arithmetic_mean() {
        let positions = [0.5, -1.0, 2.0, 3.5];
        let losses = [0.3, 4.0, 1.2, 0.9];
        let c = weighted_consensus(&positions, 1, &losses, 1e-12).unwrap();
        let mean = positions.iter().sum::<f64>() / 4.0;
        assert!(close(c.point[0], mean, 1e-9));
    }

    #[test]
    fn two_point_weighted_average_matches_direct_formula() {
        // Unshifted scalar evaluation: x* = e^{-10} / (1 + e^{-10}).
        let direct = (-10.0f64).exp() / (1.0 + (-10.0f64).exp());
        let c = weighted_consensus(&[0.0, 1.0], 1, &[0.0, 10.0], 1.0).unwrap();
        assert!(close(c.point[0], direct, 1e-15));
        assert!(close(c.point[0], 4.5398e-5, 1e-9));
        // log total weight: log(1 + e^{-10}).
        assert!(close(c.log_total_weight, (1.0 + (-10.0f64).exp()).ln(), 1e-12));
    }

    #[test]
    fn huge_beta_does_not_underflow() {
        // Shifted weights keep the sharp-beta limit exact where the naive
        // formula would return 0/0.
        let c = weighted_consensus(&[0.0, 1.0], 1, &[1000.0, 1001.0], 1e6).unwrap();
        assert!(c.point[0].is_finite());
        assert!(close(c.point[0], 0.0, 1e-12));
    }

    #[test]
    fn shift_invariance_of_weights() {
        let positions = [0.1, 0.7, -0.4, 1.3];
        let losses = [2.0, 0.5, 1.1, 3.0];
        let shifted: Vec<f64> = losses.iter().map(|l| l + 123.456).collect();
        let a = weighted_consensus(&positions, 1, &losses, 7.0).unwrap();
        let b = weighted_consensus(&positions, 1, &shifted, 7.0).unwrap();
        assert!(close(a.point[0], b.point[0], 1e-12 * a.point[0].abs().max(1.0)));
    }

    #[test]
    fn consensus_stays_in_convex_hull() {
        let positions = [1.0, -2.0, 0.5, 4.0, -1.0, 2.5];
        let losses = [0.2, 0.9, 0.4];
        let c = weighted_consensus(&positions, 2, &losses, 3.0).unwrap();
        for i in 0..2 {
            let coords: Vec<f64> = (0..3).map(|j| positions[j * 2 + i]).collect();
            let lo = coords.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = coords.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(c.point[i] >= lo - 1e-12 && c.point[i] <= hi + 1e-12);
        }
    }

    #[test]
    fn empty_subset_is_domain_error() {
        assert!(matches!(
            weighted_consensus(&[], 1, &[], 1.0),
            Err(CboError::EmptySubset)
        ));
        assert!(matches!(
            argmin_consensus(&[], 1, &[]),
            Err(CboError::EmptySubset)
        ));
        assert!(matches!(
            laplace_estimate(&[], 1.0),
            Err(CboError::EmptySubset)
        ));
    }

    #[test]
    fn non_finite_loss_is_input_error() {
        assert!(matches!(
            weighted_consensus(&[0.0, 1.0], 1, &[0.0, f64::NAN], 1.0),
            Err(CboError::NonFinite { .. })
        ));
    }

    #[test]
    fn argmin_picks_unique_minimum() {
        let c = argmin_consensus(&[10.0, 20.0, 30.0], 1, &[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(c.point, vec![20.0]);
    }

    #[test]
    fn argmin_single_particle() {
        let c = argmin_consensus(&[5.0, 6.0], 2, &[0.42]).unwrap();
        assert_eq!(c.point, vec![5.0, 6.0]);
    }

    #[test]
    fn argmin_tie_breaks_to_lowest_index() {
        let c = argmin_consensus(&[10.0, 20.0, 30.0], 1, &[1.0, 1.0, 5.0]).unwrap();
        assert_eq!(c.point, vec![10.0]);
    }

    #[test]
    fn argmin_is_shift_invariant() {
        let positions = [10.0, 20.0, 30.0];
        let a = argmin_consensus(&positions, 1, &[3.0, 1.0, 2.0]).unwrap();
        let b = argmin_consensus(&positions, 1, &[103.0, 101.0, 102.0]).unwrap();
        assert_eq!(a.point, b.point);
    }

    #[test]
    fn laplace_constant_losses_return_the_constant() {
        for beta in [0.1, 1.0, 100.0] {
            let v = laplace_estimate(&[2.5, 2.5, 2.5], beta).unwrap();
            assert!(close(v, 2.5, 1e-12));
        }
    }

    #[test]
    fn laplace_matches_direct_formula() {
        // Unshifted scalar evaluation: -log((1 + e^{-10}) / 2).
        let direct = -((1.0 + (-10.0f64).exp()) / 2.0).ln();
        let v = laplace_estimate(&[0.0, 10.0], 1.0).unwrap();
        assert!(close(v, direct, 1e-15));
        assert!(close(v, 0.693102, 1e-5));
    }

    #[test]
    fn laplace_is_nonincreasing_in_beta_and_bounded() {
        let losses = [0.0, 10.0];
        let v1 = laplace_estimate(&losses, 1.0).unwrap();
        let v100 = laplace_estimate(&losses, 100.0).unwrap();
        assert!(v100 <= v1);
        assert!(v100 >= 0.0);
        let mean = losses.iter().sum::<f64>() / losses.len() as f64;
        assert!(v1 >= 0.0 && v1 <= mean);
    }
}
