//! Dimension-normalized Rastrigin function with a translated minimizer.

use std::f64::consts::PI;

use crate::objective::{KnownMin, Objective};

/// `L(x) = (1/d) sum_i [(x_i - shift)^2 - 10 cos(2 pi (x_i - shift)) + 10] + lift`.
///
/// The global minimum sits at `shift * 1` with value `lift`; the cosine comb
/// surrounds it with a dense lattice of local minima.
#[derive(Debug, Clone)]
pub struct Rastrigin {
    dim: usize,
    shift: f64,
    lift: f64,
}

impl Rastrigin {
    pub fn new(dim: usize, shift: f64, lift: f64) -> Self {
        assert!(dim >= 1, "rastrigin requires dim >= 1");
        Self { dim, shift, lift }
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }
}

impl Objective for Rastrigin {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_full(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for &xi in x {
            let t = xi - self.shift;
            acc += t * t - 10.0 * (2.0 * PI * t).cos() + 10.0;
        }
        acc / self.dim as f64 + self.lift
    }

    fn known_min(&self) -> Option<KnownMin> {
        Some(KnownMin {
            point: vec![self.shift; self.dim],
            value: self.lift,
        })
    }

    fn curvature_bound(&self) -> Option<f64> {
        // Per coordinate the second derivative is bounded by 2 + 40 pi^2; the
        // 1/d normalization divides it out of the Hessian.
        Some((2.0 + 40.0 * PI * PI) / self.dim as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizer_evaluates_to_lift() {
        let r = Rastrigin::new(3, 2.0, 0.7);
        assert!((r.eval_full(&[2.0, 2.0, 2.0]) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn half_integer_point_value() {
        // 0.25 - 10 cos(pi) + 10 = 20.25.
        let r = Rastrigin::new(1, 0.0, 0.0);
        assert!((r.eval_full(&[0.5]) - 20.25).abs() < 1e-12);
        let r2 = Rastrigin::new(2, 0.0, 0.0);
        assert!((r2.eval_full(&[0.5, 0.5]) - 20.25).abs() < 1e-12);
    }

    #[test]
    fn grid_scan_finds_no_value_below_lift() {
        for (dim, shift, lift) in [(1usize, 0.0, 0.0), (2, 1.0, 0.3)] {
            let r = Rastrigin::new(dim, shift, lift);
            let steps = (1.2 / 0.05) as i64 + 1;
            let mut best = f64::INFINITY;
            if dim == 1 {
                for i in 0..steps {
                    let x = shift - 0.6 + 0.05 * i as f64;
                    best = best.min(r.eval_full(&[x]));
                }
            } else {
                for i in 0..steps {
                    for j in 0..steps {
                        let x = shift - 0.6 + 0.05 * i as f64;
                        let y = shift - 0.6 + 0.05 * j as f64;
                        best = best.min(r.eval_full(&[x, y]));
                    }
                }
            }
            assert!(best >= lift - 1e-12, "scan found {best} below lift {lift}");
        }
    }
}
