//! One-dimensional finite-sum objective with wide oscillatory basins.
//!
//! `l_i(x) = e^{sin(2 x^2)} + (x - s_i - pi/2)^2 / 10` where the sample shifts
//! `s_i` are Gaussian. The exponential of the sine digs deep flat local minima
//! that gradient chains rarely escape, while the mild quadratic centers the
//! global basin near `pi/2`.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::ensemble::stream_rng;
use crate::objective::{KnownMin, Objective};

/// Variance of the recorded sample shifts.
const SHIFT_VARIANCE: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct Oscillatory {
    shifts: Vec<f64>,
}

impl Oscillatory {
    /// Draws `n_samples` shifts `s_i ~ N(0, 0.1)` from the given seed and
    /// records them, so the objective is reproducible.
    pub fn new(n_samples: usize, seed: u64) -> Self {
        assert!(n_samples >= 1, "oscillatory objective requires n >= 1");
        let mut rng = stream_rng(seed, 0);
        let sd = SHIFT_VARIANCE.sqrt();
        let shifts = (0..n_samples)
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self { shifts }
    }

    pub fn with_shifts(shifts: Vec<f64>) -> Self {
        assert!(!shifts.is_empty());
        Self { shifts }
    }

    pub fn shifts(&self) -> &[f64] {
        &self.shifts
    }

    fn sample_loss(&self, x: f64, i: usize) -> f64 {
        let d = x - self.shifts[i] - FRAC_PI_2;
        (2.0 * x * x).sin().exp() + 0.1 * d * d
    }

    fn sample_grad(&self, x: f64, i: usize) -> f64 {
        let u = 2.0 * x * x;
        4.0 * x * u.cos() * u.sin().exp() + 0.2 * (x - self.shifts[i] - FRAC_PI_2)
    }
}

impl Objective for Oscillatory {
    fn dim(&self) -> usize {
        1
    }

    fn eval_full(&self, x: &[f64]) -> f64 {
        let sum: f64 = (0..self.shifts.len()).map(|i| self.sample_loss(x[0], i)).sum();
        sum / self.shifts.len() as f64
    }

    fn n_samples(&self) -> usize {
        self.shifts.len()
    }

    fn eval_sample(&self, x: &[f64], i: usize) -> f64 {
        self.sample_loss(x[0], i)
    }

    fn grad_sample(&self, x: &[f64], i: usize) -> Option<Vec<f64>> {
        Some(vec![self.sample_grad(x[0], i)])
    }

    fn has_gradients(&self) -> bool {
        true
    }

    fn known_min(&self) -> Option<KnownMin> {
        // Reference minimizer location; success criteria measure distance to it.
        let pt = vec![FRAC_PI_2];
        let value = self.eval_full(&pt);
        Some(KnownMin { point: pt, value })
    }
}
