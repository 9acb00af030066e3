//! Run parameters: rates, batch sizes, scheme selectors, stopping thresholds.

use crate::error::{CboError, Result};

/// How the noise rate evolves with the update step count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Constant(f64),
    /// `base / ln(k + 2)`; the offset keeps the value finite at step 0.
    LogDecay { base: f64 },
    /// `base * rate^k` with `rate` in (0, 1].
    Geometric { base: f64, rate: f64 },
}

impl Schedule {
    pub fn value(&self, step: usize) -> f64 {
        match *self {
            Schedule::Constant(v) => v,
            Schedule::LogDecay { base } => base / ((step + 2) as f64).ln(),
            Schedule::Geometric { base, rate } => base * rate.powi(step as i32),
        }
    }

    pub fn base(&self) -> f64 {
        match *self {
            Schedule::Constant(v) => v,
            Schedule::LogDecay { base } => base,
            Schedule::Geometric { base, .. } => base,
        }
    }

    fn validate(&self, what: &'static str) -> Result<()> {
        let ok = match *self {
            Schedule::Constant(v) => v.is_finite() && v >= 0.0,
            Schedule::LogDecay { base } => base.is_finite() && base >= 0.0,
            Schedule::Geometric { base, rate } => {
                base.is_finite() && base >= 0.0 && rate > 0.0 && rate <= 1.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(CboError::InvalidConfig(format!("invalid {what} schedule")))
        }
    }
}

/// Consensus-target construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsensusMode {
    /// Gibbs-weighted batch average.
    Weighted,
    /// Batch element with the lowest loss.
    Argmin,
}

/// Which particles move after a batch consensus is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateMode {
    /// Only the batch members.
    Partial,
    /// The whole ensemble.
    Full,
}

/// Optional smoothing of the drift cutoff in the isotropic scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeavisideMode {
    /// No cutoff: every particle drifts toward the consensus.
    Off,
    /// Logistic ramp `(1 + tanh(s / epsilon)) / 2` on the loss gap.
    Logistic { epsilon: f64 },
}

/// Discretization of the particle update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    /// Forward Euler on drift and noise.
    Euler,
    /// Exact drift flow followed by an Euler noise step.
    Splitting,
    /// Exact solution of the frozen-consensus geometric Brownian motion.
    ExactGbm,
    /// Euler step with norm-proportional noise shared across coordinates.
    IsotropicEuler { heaviside: HeavisideMode },
}

/// Consensus-stall detection and restart policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StallConfig {
    pub enabled: bool,
    /// Threshold on `(1/d) * |delta consensus|^2` below which the consensus
    /// counts as not moving.
    pub epsilon_stall: f64,
    /// Standard deviation of the additive Gaussian kick applied on a stall.
    pub kick_sigma: f64,
    pub max_restarts: usize,
}

impl Default for StallConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            epsilon_stall: 1e-4,
            kick_sigma: 0.1,
            max_restarts: 10,
        }
    }
}

/// Full parameter block for one optimizer run.
#[derive(Debug, Clone, PartialEq)]
pub struct CboParams {
    /// Drift rate toward the consensus (1/time).
    pub lambda: f64,
    /// Noise rate (1/sqrt(time)), possibly scheduled over steps.
    pub sigma: Schedule,
    /// Inverse temperature of the consensus weights.
    pub beta: f64,
    /// Learning rate (time step).
    pub gamma: f64,
    /// Particle batch size M.
    pub batch_particles: usize,
    /// Data mini-batch size m; `None` evaluates the full loss.
    pub batch_data: Option<usize>,
    pub update_mode: UpdateMode,
    pub consensus_mode: ConsensusMode,
    pub scheme: Scheme,
    /// Terminal threshold on `(1/d) * |delta consensus|^2`.
    pub epsilon_stop: f64,
    /// Cap on consensus-update steps.
    pub max_iters: usize,
    pub stall: StallConfig,
    /// Record every `trace_stride`-th consensus point (the last is always kept).
    pub trace_stride: usize,
}

impl CboParams {
    /// A plain constant-noise parameter set; callers adjust fields as needed.
    pub fn new(lambda: f64, sigma: f64, beta: f64, gamma: f64, batch_particles: usize) -> Self {
        Self {
            lambda,
            sigma: Schedule::Constant(sigma),
            beta,
            gamma,
            batch_particles,
            batch_data: None,
            update_mode: UpdateMode::Partial,
            consensus_mode: ConsensusMode::Weighted,
            scheme: Scheme::Euler,
            epsilon_stop: 1e-3,
            max_iters: 10_000,
            stall: StallConfig::default(),
            trace_stride: 1,
        }
    }

    pub fn validate(&self, n_particles: usize) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(CboError::InvalidConfig(format!(
                "lambda must be > 0, got {}",
                self.lambda
            )));
        }
        self.sigma.validate("sigma")?;
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(CboError::InvalidConfig(format!(
                "beta must be > 0, got {}",
                self.beta
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(CboError::InvalidConfig(format!(
                "gamma must be > 0, got {}",
                self.gamma
            )));
        }
        if self.batch_particles == 0 {
            return Err(CboError::InvalidConfig("batch_particles must be >= 1".into()));
        }
        if self.batch_particles > n_particles {
            return Err(CboError::InvalidConfig(format!(
                "batch_particles {} exceeds ensemble size {}",
                self.batch_particles, n_particles
            )));
        }
        if !(self.epsilon_stop > 0.0) {
            return Err(CboError::InvalidConfig(format!(
                "epsilon_stop must be > 0, got {}",
                self.epsilon_stop
            )));
        }
        if self.max_iters == 0 {
            return Err(CboError::InvalidConfig("max_iters must be >= 1".into()));
        }
        if self.stall.enabled && !(self.stall.epsilon_stall > 0.0) {
            return Err(CboError::InvalidConfig(
                "epsilon_stall must be > 0 when stall handling is enabled".into(),
            ));
        }
        if self.stall.kick_sigma < 0.0 {
            return Err(CboError::InvalidConfig("kick_sigma must be >= 0".into()));
        }
        if self.trace_stride == 0 {
            return Err(CboError::InvalidConfig("trace_stride must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_schedule_is_flat() {
        let s = Schedule::Constant(5.0);
        assert_eq!(s.value(0), 5.0);
        assert_eq!(s.value(10_000), 5.0);
    }

    #[test]
    fn log_decay_is_positive_and_decreasing() {
        let s = Schedule::LogDecay { base: 5.0 };
        let mut prev = f64::INFINITY;
        for k in 0..1000 {
            let v = s.value(k);
            assert!(v > 0.0 && v <= prev);
            prev = v;
        }
        assert!((s.value(0) - 5.0 / 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn geometric_schedule_decays() {
        let s = Schedule::Geometric {
            base: 2.0,
            rate: 0.5,
        };
        assert!((s.value(3) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_bad_rates() {
        let mut p = CboParams::new(1.0, 1.0, 30.0, 0.01, 4);
        assert!(p.validate(10).is_ok());
        p.lambda = 0.0;
        assert!(p.validate(10).is_err());
        p.lambda = 1.0;
        p.beta = -1.0;
        assert!(p.validate(10).is_err());
        p.beta = 30.0;
        p.batch_particles = 11;
        assert!(p.validate(10).is_err());
        p.batch_particles = 0;
        assert!(p.validate(10).is_err());
    }

    #[test]
    fn sigma_zero_is_allowed() {
        let p = CboParams::new(1.0, 0.0, 30.0, 0.01, 4);
        assert!(p.validate(10).is_ok());
    }
}
