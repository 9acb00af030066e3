//! The evaluation interface optimizers run against.

/// A known global minimizer, used by success criteria and gap experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownMin {
    pub point: Vec<f64>,
    pub value: f64,
}

/// A target function, optionally in finite-sum form with per-sample terms.
///
/// Implementations must be pure: no interior mutability visible through
/// evaluation, so calls are safe from any number of threads.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    /// The full loss `L(x)`. For finite-sum objectives this is the mean of the
    /// per-sample losses.
    fn eval_full(&self, x: &[f64]) -> f64;

    /// Number of per-sample terms; 0 means the objective is not a finite sum.
    fn n_samples(&self) -> usize {
        0
    }

    /// Loss of sample `i` at `x`. Only meaningful when `n_samples() > 0` and
    /// `i < n_samples()`.
    fn eval_sample(&self, _x: &[f64], _i: usize) -> f64 {
        unimplemented!("objective is not a finite sum")
    }

    /// Gradient of sample `i` at `x`, if the objective provides one.
    fn grad_sample(&self, _x: &[f64], _i: usize) -> Option<Vec<f64>> {
        None
    }

    fn has_gradients(&self) -> bool {
        false
    }

    fn known_min(&self) -> Option<KnownMin> {
        None
    }

    /// Upper bound on the largest curvature of the loss, when one is known.
    fn curvature_bound(&self) -> Option<f64> {
        None
    }
}

/// Shifted sphere `L(x) = |x - center|^2 + offset`; the simplest convex case.
#[derive(Debug, Clone)]
pub struct Quadratic {
    dim: usize,
    center: Vec<f64>,
    offset: f64,
}

impl Quadratic {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            center: vec![0.0; dim],
            offset: 0.0,
        }
    }

    pub fn with_center(center: Vec<f64>, offset: f64) -> Self {
        Self {
            dim: center.len(),
            center,
            offset,
        }
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_full(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (xi, ci) in x.iter().zip(&self.center) {
            let d = xi - ci;
            acc += d * d;
        }
        acc + self.offset
    }

    fn known_min(&self) -> Option<KnownMin> {
        Some(KnownMin {
            point: self.center.clone(),
            value: self.offset,
        })
    }

    fn curvature_bound(&self) -> Option<f64> {
        Some(2.0)
    }
}
