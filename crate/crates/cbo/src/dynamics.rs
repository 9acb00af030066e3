//! Particle update schemes and the optimizer loop.
//!
//! Each scheme moves a particle toward a consensus point with multiplicative
//! noise. The per-coordinate kernels are pure functions of the noise draw so
//! their one-step moments can be checked in closed form; the ensemble-level
//! wrappers pull noise from each particle's own stream.

use std::collections::VecDeque;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::batching::{minibatch_loss, sample_data_batch, BatchPlan, DataBatch};
use crate::consensus::{argmin_consensus_indexed, weighted_consensus_indexed};
use crate::ensemble::{scheduler_rng, Ensemble, InitSpec};
use crate::error::{CboError, Result};
use crate::objective::Objective;
use crate::params::{CboParams, ConsensusMode, HeavisideMode, Scheme, StallConfig, UpdateMode};

/// Consecutive sub-threshold consensus moves before the loop declares a stall.
pub const STALL_CONSECUTIVE_CHECKS: usize = 10;

/// Required relative drop of the recorded consensus loss between restarts.
pub const STALL_MIN_RELATIVE_DROP: f64 = 1e-6;

/// Consecutive restarts without a new best recorded loss before giving up.
/// Kicked ensembles re-freeze at a noisy loss level, so a single
/// non-improving restart says little; the run ends once this many in a row
/// fail to beat the best level seen.
pub const STALL_PATIENCE: usize = 25;

/// One Euler step: `x - lambda gamma (x - t) + sigma sqrt(gamma) (x - t) z`.
#[inline]
pub fn euler_map(x: f64, target: f64, lambda: f64, sigma: f64, gamma: f64, z: f64) -> f64 {
    let d = x - target;
    x - lambda * gamma * d + sigma * gamma.sqrt() * d * z
}

/// Exact drift flow to `t + (x - t) e^{-lambda gamma}`, then an Euler noise
/// step on the flowed displacement. The exponential flow cannot overshoot the
/// target no matter how large `lambda gamma` is.
#[inline]
pub fn splitting_map(x: f64, target: f64, lambda: f64, sigma: f64, gamma: f64, w: f64) -> f64 {
    let flowed = target + (x - target) * (-lambda * gamma).exp();
    flowed + sigma * gamma.sqrt() * (flowed - target) * w
}

/// Exact one-step solution of the frozen-consensus geometric Brownian motion:
/// `t + (x - t) exp((-lambda - sigma^2/2) gamma + sigma sqrt(gamma) omega)`.
#[inline]
pub fn exact_gbm_map(x: f64, target: f64, lambda: f64, sigma: f64, gamma: f64, omega: f64) -> f64 {
    let exponent = (-lambda - 0.5 * sigma * sigma) * gamma + sigma * gamma.sqrt() * omega;
    target + (x - target) * exponent.exp()
}

/// One isotropic Euler step for a whole particle: the noise amplitude is the
/// Euclidean distance to the target, shared across coordinates.
/// `drift_factor` scales the drift term (1 without a cutoff).
pub fn isotropic_map(
    x: &mut [f64],
    target: &[f64],
    lambda: f64,
    sigma: f64,
    gamma: f64,
    drift_factor: f64,
    z: &[f64],
) {
    let norm = x
        .iter()
        .zip(target)
        .map(|(xi, ti)| (xi - ti) * (xi - ti))
        .sum::<f64>()
        .sqrt();
    let noise_scale = sigma * gamma.sqrt() * norm;
    for (i, xi) in x.iter_mut().enumerate() {
        *xi += -lambda * gamma * drift_factor * (*xi - target[i]) + noise_scale * z[i];
    }
}

fn validate_update_inputs(ens: &Ensemble, x_star: &[f64], gamma: f64) -> Result<()> {
    if x_star.len() != ens.dim() {
        return Err(CboError::DimensionMismatch {
            expected: ens.dim(),
            got: x_star.len(),
        });
    }
    if x_star.iter().any(|v| !v.is_finite()) {
        return Err(CboError::NonFinite {
            what: "consensus point",
        });
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(CboError::InvalidConfig(format!("gamma must be > 0, got {gamma}")));
    }
    Ok(())
}

/// Applies the Euler scheme to the listed particles, drawing one standard
/// normal per particle per coordinate from the particle's stream.
pub fn euler_update(
    ens: &mut Ensemble,
    targets: &[usize],
    x_star: &[f64],
    lambda: f64,
    sigma: f64,
    gamma: f64,
) -> Result<()> {
    validate_update_inputs(ens, x_star, gamma)?;
    for &j in targets {
        let (row, rng) = ens.particle_with_rng(j);
        for (xi, &ti) in row.iter_mut().zip(x_star) {
            let z: f64 = rng.sample(StandardNormal);
            *xi = euler_map(*xi, ti, lambda, sigma, gamma, z);
        }
    }
    Ok(())
}

/// Applies the splitting scheme to the listed particles.
pub fn splitting_update(
    ens: &mut Ensemble,
    targets: &[usize],
    x_star: &[f64],
    lambda: f64,
    sigma: f64,
    gamma: f64,
) -> Result<()> {
    validate_update_inputs(ens, x_star, gamma)?;
    for &j in targets {
        let (row, rng) = ens.particle_with_rng(j);
        for (xi, &ti) in row.iter_mut().zip(x_star) {
            let w: f64 = rng.sample(StandardNormal);
            *xi = splitting_map(*xi, ti, lambda, sigma, gamma, w);
        }
    }
    Ok(())
}

/// Applies the exact frozen-consensus GBM step to the listed particles.
pub fn exact_gbm_update(
    ens: &mut Ensemble,
    targets: &[usize],
    x_star: &[f64],
    lambda: f64,
    sigma: f64,
    gamma: f64,
) -> Result<()> {
    validate_update_inputs(ens, x_star, gamma)?;
    for &j in targets {
        let (row, rng) = ens.particle_with_rng(j);
        for (xi, &ti) in row.iter_mut().zip(x_star) {
            let omega: f64 = rng.sample(StandardNormal);
            *xi = exact_gbm_map(*xi, ti, lambda, sigma, gamma, omega);
        }
    }
    Ok(())
}

/// Applies the isotropic Euler scheme; `drift_factors[i]` scales particle
/// `targets[i]`'s drift (pass `None` for the plain variant).
pub fn isotropic_update(
    ens: &mut Ensemble,
    targets: &[usize],
    x_star: &[f64],
    lambda: f64,
    sigma: f64,
    gamma: f64,
    drift_factors: Option<&[f64]>,
) -> Result<()> {
    validate_update_inputs(ens, x_star, gamma)?;
    if let Some(f) = drift_factors {
        if f.len() != targets.len() {
            return Err(CboError::DimensionMismatch {
                expected: targets.len(),
                got: f.len(),
            });
        }
    }
    let dim = ens.dim();
    let mut z = vec![0.0; dim];
    for (idx, &j) in targets.iter().enumerate() {
        let factor = drift_factors.map_or(1.0, |f| f[idx]);
        let (row, rng) = ens.particle_with_rng(j);
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        isotropic_map(row, x_star, lambda, sigma, gamma, factor, &z);
    }
    Ok(())
}

/// True when `(1/d) |new - prev|_2^2 <= epsilon` (boundary inclusive).
pub fn check_stop(prev: &[f64], new: &[f64], epsilon: f64) -> Result<bool> {
    if prev.len() != new.len() {
        return Err(CboError::DimensionMismatch {
            expected: prev.len(),
            got: new.len(),
        });
    }
    let sq: f64 = prev
        .iter()
        .zip(new)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sq / prev.len() as f64 <= epsilon)
}

/// Additive Gaussian kick applied to the whole ensemble when the consensus
/// stops moving; a no-op unless the config enables it.
pub fn stall_kick(ens: &mut Ensemble, config: &StallConfig) {
    if config.enabled {
        ens.gaussian_kick(config.kick_sigma);
    }
}

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Consecutive consensus points moved less than the terminal threshold.
    CriterionMet,
    /// The step cap was reached.
    MaxIters,
    /// Restarts stopped improving the recorded consensus loss (or ran out).
    RestartsExhausted,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::CriterionMet => "criterion_met",
            StopReason::MaxIters => "max_iters",
            StopReason::RestartsExhausted => "restarts_exhausted",
        }
    }
}

/// One recorded consensus computation.
#[derive(Debug, Clone)]
pub struct TraceEntry {
    /// 1-based consensus-update step count.
    pub iteration: usize,
    /// Batch index within its scheduling cycle.
    pub batch_index: usize,
    pub consensus: Vec<f64>,
    /// Loss estimate at the consensus point (mini-batch when batching data).
    pub loss_estimate: f64,
}

/// Everything a finished run reports back.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub trace: Vec<TraceEntry>,
    pub stop_reason: StopReason,
    pub iterations_used: usize,
    pub seed: u64,
    pub wall_time_ms: f64,
    pub final_consensus: Vec<f64>,
    pub final_loss_estimate: f64,
    pub restarts_used: usize,
}

/// The optimizer loop, advanced one consensus sub-step at a time.
///
/// Each step serves one particle batch: estimate losses, form the consensus,
/// move the chosen particles, then run the stopping and stall checks. Batches
/// come from the remainder-carrying scheduler, and data mini-batches are drawn
/// fresh per batch.
pub struct CboRun<'a> {
    obj: &'a dyn Objective,
    params: CboParams,
    ensemble: Ensemble,
    plan: BatchPlan,
    sched_rng: rand_chacha::ChaCha8Rng,
    pending: VecDeque<Vec<usize>>,
    cycle_batch_index: usize,
    steps_done: usize,
    prev_consensus: Option<Vec<f64>>,
    latest_consensus: Option<Vec<f64>>,
    latest_loss: f64,
    consensus_refresh_every: usize,
    stall_streak: usize,
    stalls_without_improvement: usize,
    restarts_used: usize,
    recorded_stall_losses: Vec<f64>,
    trace: Vec<TraceEntry>,
    last_traced_step: usize,
}

/// What one sub-step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub stopped: Option<StopReason>,
    /// Whether this step recomputed the consensus (false only when a refresh
    /// interval > 1 reuses the cached point).
    pub refreshed_consensus: bool,
}

impl<'a> CboRun<'a> {
    pub fn new(
        obj: &'a dyn Objective,
        params: CboParams,
        init: &InitSpec,
        n_particles: usize,
        seed: u64,
    ) -> Result<Self> {
        params.validate(n_particles)?;
        if let Some(m) = params.batch_data {
            if obj.n_samples() == 0 {
                return Err(CboError::InvalidConfig(
                    "batch_data requires a finite-sum objective".into(),
                ));
            }
            if m == 0 || m > obj.n_samples() {
                return Err(CboError::InvalidConfig(format!(
                    "batch_data {m} out of range for {} samples",
                    obj.n_samples()
                )));
            }
        }
        let ensemble = Ensemble::init(init, n_particles, obj.dim(), seed)?;
        let plan = BatchPlan::new(n_particles, params.batch_particles)?;
        Ok(Self {
            obj,
            params,
            ensemble,
            plan,
            sched_rng: scheduler_rng(seed),
            pending: VecDeque::new(),
            cycle_batch_index: 0,
            steps_done: 0,
            prev_consensus: None,
            latest_consensus: None,
            latest_loss: f64::NAN,
            consensus_refresh_every: 1,
            stall_streak: 0,
            stalls_without_improvement: 0,
            restarts_used: 0,
            recorded_stall_losses: Vec::new(),
            trace: Vec::new(),
            last_traced_step: 0,
        })
    }

    /// Recompute the consensus only every `every` sub-steps; in between, the
    /// cached point keeps steering the updates.
    pub fn with_refresh_every(mut self, every: usize) -> Result<Self> {
        if every == 0 {
            return Err(CboError::InvalidConfig(
                "consensus refresh interval must be >= 1".into(),
            ));
        }
        self.consensus_refresh_every = every;
        Ok(self)
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    pub fn latest_consensus(&self) -> Option<&[f64]> {
        self.latest_consensus.as_deref()
    }

    pub fn latest_loss_estimate(&self) -> f64 {
        self.latest_loss
    }

    pub fn params(&self) -> &CboParams {
        &self.params
    }

    fn estimate_loss(&self, x: &[f64], data_batch: Option<&DataBatch>) -> Result<f64> {
        match data_batch {
            Some(batch) => minibatch_loss(self.obj, x, batch),
            None => Ok(self.obj.eval_full(x)),
        }
    }

    fn batch_losses(
        &self,
        batch: &[usize],
        data_batch: Option<&DataBatch>,
    ) -> Result<Vec<f64>> {
        let mut losses = Vec::with_capacity(batch.len());
        for &j in batch {
            let value = self.estimate_loss(self.ensemble.particle(j), data_batch)?;
            if !value.is_finite() {
                return Err(CboError::NonFiniteLoss {
                    particle: j,
                    iteration: self.steps_done + 1,
                    value,
                });
            }
            losses.push(value);
        }
        Ok(losses)
    }

    /// Advances one batch sub-step. Returns what happened; once `stopped` is
    /// set the loop must not be stepped again.
    pub fn step(&mut self) -> Result<StepOutcome> {
        if self.pending.is_empty() {
            self.pending.extend(self.plan.next_batches(&mut self.sched_rng));
            self.cycle_batch_index = 0;
        }
        let batch = self.pending.pop_front().expect("scheduler yielded no batches");
        let theta = self.cycle_batch_index;
        self.cycle_batch_index += 1;

        let data_batch = match self.params.batch_data {
            Some(m) => Some(sample_data_batch(self.obj.n_samples(), m, &mut self.sched_rng)?),
            None => None,
        };

        let refresh = self.steps_done % self.consensus_refresh_every == 0
            || self.latest_consensus.is_none();
        if refresh {
            let losses = self.batch_losses(&batch, data_batch.as_ref())?;
            let consensus = match self.params.consensus_mode {
                ConsensusMode::Weighted => weighted_consensus_indexed(
                    self.ensemble.positions(),
                    self.ensemble.dim(),
                    &batch,
                    &losses,
                    self.params.beta,
                )?,
                ConsensusMode::Argmin => argmin_consensus_indexed(
                    self.ensemble.positions(),
                    self.ensemble.dim(),
                    &batch,
                    &losses,
                )?,
            };
            let loss_at_consensus = self.estimate_loss(&consensus.point, data_batch.as_ref())?;
            if !loss_at_consensus.is_finite() {
                return Err(CboError::NonFinite {
                    what: "loss at consensus point",
                });
            }
            self.latest_consensus = Some(consensus.point);
            self.latest_loss = loss_at_consensus;
        }
        let x_star = self
            .latest_consensus
            .clone()
            .expect("consensus missing after refresh");

        let owned_targets: Vec<usize>;
        let targets: &[usize] = match self.params.update_mode {
            UpdateMode::Partial => &batch,
            UpdateMode::Full => {
                owned_targets = (0..self.ensemble.n_particles()).collect();
                &owned_targets
            }
        };

        let sigma = self.params.sigma.value(self.steps_done);
        let lambda = self.params.lambda;
        let gamma = self.params.gamma;
        match self.params.scheme {
            Scheme::Euler => euler_update(&mut self.ensemble, targets, &x_star, lambda, sigma, gamma)?,
            Scheme::Splitting => {
                splitting_update(&mut self.ensemble, targets, &x_star, lambda, sigma, gamma)?
            }
            Scheme::ExactGbm => {
                exact_gbm_update(&mut self.ensemble, targets, &x_star, lambda, sigma, gamma)?
            }
            Scheme::IsotropicEuler { heaviside } => {
                let factors = match heaviside {
                    HeavisideMode::Off => None,
                    HeavisideMode::Logistic { epsilon } => {
                        let mut f = Vec::with_capacity(targets.len());
                        for &j in targets {
                            let loss =
                                self.estimate_loss(self.ensemble.particle(j), data_batch.as_ref())?;
                            let gap = loss - self.latest_loss;
                            f.push(0.5 * (1.0 + (gap / epsilon).tanh()));
                        }
                        Some(f)
                    }
                };
                isotropic_update(
                    &mut self.ensemble,
                    targets,
                    &x_star,
                    lambda,
                    sigma,
                    gamma,
                    factors.as_deref(),
                )?;
            }
        }

        self.steps_done += 1;
        if refresh
            && ((self.steps_done - 1) % self.params.trace_stride == 0 || self.trace.is_empty())
        {
            self.push_trace(theta, &x_star);
        }

        let mut stopped = None;
        if refresh {
            if let Some(prev) = self.prev_consensus.take() {
                if check_stop(&prev, &x_star, self.params.epsilon_stop)? {
                    // With stall handling on, a frozen consensus is treated as
                    // a stall rather than convergence: sharp weights can pin
                    // the consensus to one particle (its own fixed point)
                    // while the rest of the ensemble still roams, and the
                    // kick-restart cycle is the escape hatch for exactly that.
                    if self.params.stall.enabled {
                        stopped = self.handle_stall(theta, &x_star);
                    } else {
                        stopped = Some(StopReason::CriterionMet);
                    }
                } else if self.params.stall.enabled {
                    if check_stop(&prev, &x_star, self.params.stall.epsilon_stall)? {
                        self.stall_streak += 1;
                    } else {
                        self.stall_streak = 0;
                    }
                    if self.stall_streak >= STALL_CONSECUTIVE_CHECKS {
                        stopped = self.handle_stall(theta, &x_star);
                    }
                }
            }
            self.prev_consensus = Some(x_star);
        }

        if stopped.is_none() && self.steps_done >= self.params.max_iters {
            stopped = Some(StopReason::MaxIters);
        }
        if stopped.is_some() && self.last_traced_step != self.steps_done {
            let point = self.latest_consensus.clone().unwrap_or_default();
            self.push_trace(theta, &point);
        }
        Ok(StepOutcome {
            stopped,
            refreshed_consensus: refresh,
        })
    }

    fn push_trace(&mut self, theta: usize, consensus: &[f64]) {
        self.trace.push(TraceEntry {
            iteration: self.steps_done,
            batch_index: theta,
            consensus: consensus.to_vec(),
            loss_estimate: self.latest_loss,
        });
        self.last_traced_step = self.steps_done;
    }

    /// Records the consensus loss, then either terminates (loss no longer
    /// dropping, or restart budget spent) or kicks the ensemble and goes on.
    fn handle_stall(&mut self, _theta: usize, _x_star: &[f64]) -> Option<StopReason> {
        self.stall_streak = 0;
        let current = self.latest_loss;
        let best = self
            .recorded_stall_losses
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let improved = current <= best - STALL_MIN_RELATIVE_DROP * best.abs();
        self.recorded_stall_losses.push(current);
        if improved {
            self.stalls_without_improvement = 0;
        } else {
            self.stalls_without_improvement += 1;
            if self.stalls_without_improvement >= STALL_PATIENCE {
                return Some(StopReason::RestartsExhausted);
            }
        }
        if self.restarts_used >= self.params.stall.max_restarts {
            return Some(StopReason::RestartsExhausted);
        }
        self.ensemble.gaussian_kick(self.params.stall.kick_sigma);
        self.restarts_used += 1;
        None
    }

    fn into_report(self, stop_reason: StopReason, wall_time_ms: f64) -> RunReport {
        let final_consensus = self.latest_consensus.unwrap_or_default();
        RunReport {
            trace: self.trace,
            stop_reason,
            iterations_used: self.steps_done,
            seed: self.ensemble.seed(),
            wall_time_ms,
            final_consensus,
            final_loss_estimate: self.latest_loss,
            restarts_used: self.restarts_used,
        }
    }

    /// Steps until a stop condition fires and returns the report.
    pub fn run(mut self) -> Result<RunReport> {
        let start = Instant::now();
        loop {
            let outcome = self.step()?;
            if let Some(reason) = outcome.stopped {
                let wall = start.elapsed().as_secs_f64() * 1e3;
                return Ok(self.into_report(reason, wall));
            }
        }
    }
}

/// Runs the full optimizer loop to completion.
pub fn run_optimizer(
    obj: &dyn Objective,
    params: CboParams,
    init: &InitSpec,
    n_particles: usize,
    seed: u64,
) -> Result<RunReport> {
    CboRun::new(obj, params, init, n_particles, seed)?.run()
}
