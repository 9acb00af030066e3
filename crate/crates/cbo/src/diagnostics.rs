//! Computable checks of the mean-field contraction theory: parameter
//! certificates, anchored moment-decay experiments, semi-discrete variance
//! traces, and soft-min gap scans.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::consensus::{laplace_estimate, log_mean_weight};
use crate::dynamics::{
    euler_update, exact_gbm_update, isotropic_update, splitting_update, CboRun,
};
use crate::ensemble::{stream_rng, Ensemble, InitSpec};
use crate::error::{CboError, Result};
use crate::objective::Objective;
use crate::params::{CboParams, Scheme};

/// Certificate of the variance-decay conditions: `mu > 0` and `nu <= 3/4`
/// guarantee exponential contraction in the mean-field model.
#[derive(Debug, Clone)]
pub struct ConvergenceCertificate {
    pub mu: f64,
    /// `NaN` when `mu <= 0` leaves it undefined.
    pub nu: f64,
    pub mu_positive: bool,
    pub nu_ok: bool,
    pub v0: f64,
    pub log_weight0: f64,
    pub loss_min: f64,
    pub curvature_bound: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub beta: f64,
}

/// Evaluates the certificate on a sampled ensemble.
///
/// `mu = 2 lambda - sigma^2/2 - sigma^2 e^{-beta L_m} / M_L(0)` and
/// `nu = (2 V(0) / (mu M_L(0)^2)) beta e^{-2 beta L_m} c_L (2 lambda + sigma^2)`,
/// with every exponential handled through logs so large `beta` stays finite.
pub fn compute_certificate(
    ens: &Ensemble,
    obj: &dyn Objective,
    lambda: f64,
    sigma: f64,
    beta: f64,
    loss_min: f64,
    curvature_bound: f64,
) -> Result<ConvergenceCertificate> {
    if !(lambda > 0.0) || !(beta > 0.0) || sigma < 0.0 {
        return Err(CboError::InvalidConfig(
            "certificate needs lambda > 0, beta > 0, sigma >= 0".into(),
        ));
    }
    if !(curvature_bound > 0.0) {
        return Err(CboError::InvalidConfig(
            "curvature bound must be > 0".into(),
        ));
    }
    let losses: Vec<f64> = (0..ens.n_particles())
        .map(|j| obj.eval_full(ens.particle(j)))
        .collect();
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(CboError::NonFinite { what: "loss" });
    }
    let sampled_min = losses.iter().cloned().fold(f64::INFINITY, f64::min);
    if loss_min > sampled_min + 1e-12 {
        return Err(CboError::InvalidConfig(format!(
            "claimed lower bound {loss_min} exceeds a sampled loss {sampled_min}"
        )));
    }

    let log_weight0 = log_mean_weight(&losses, beta)?;
    // e^{-beta L_m} / M_L(0) in log space.
    let weight_ratio = (-beta * loss_min - log_weight0).exp();
    let mu = 2.0 * lambda - 0.5 * sigma * sigma - sigma * sigma * weight_ratio;
    let mu_positive = mu > 0.0;

    let v0 = ens.variance();
    let nu = if !mu_positive {
        f64::NAN
    } else if v0 == 0.0 {
        0.0
    } else {
        let log_nu = (2.0 * v0).ln() - mu.ln() - 2.0 * log_weight0 + beta.ln()
            - 2.0 * beta * loss_min
            + curvature_bound.ln()
            + (2.0 * lambda + sigma * sigma).ln();
        log_nu.exp()
    };
    let nu_ok = mu_positive && nu <= 0.75;

    Ok(ConvergenceCertificate {
        mu,
        nu,
        mu_positive,
        nu_ok,
        v0,
        log_weight0,
        loss_min,
        curvature_bound,
        lambda,
        sigma,
        beta,
    })
}

/// Fitted decay of the anchored second moment.
#[derive(Debug, Clone)]
pub struct AnchoredDecayFit {
    /// Least-squares slope of `log E|X - a|^2` per step over the fit window.
    pub slope: f64,
    /// Standard error of the mean per-step increment over the same window.
    pub std_error: f64,
    /// `log E|X - a|^2` after 0, 1, ..., n_steps updates.
    pub log_moments: Vec<f64>,
}

/// Closed-form per-step log-multiplier the anchored experiment should fit.
pub fn anchored_expected_slope(scheme: Scheme, lambda: f64, sigma: f64, gamma: f64, dim: usize) -> f64 {
    let contraction = 1.0 - lambda * gamma;
    match scheme {
        Scheme::Euler | Scheme::Splitting => {
            let mult = match scheme {
                Scheme::Euler => contraction * contraction + sigma * sigma * gamma,
                _ => (-2.0 * lambda * gamma).exp() * (1.0 + sigma * sigma * gamma),
            };
            mult.ln()
        }
        Scheme::ExactGbm => (-2.0 * lambda + sigma * sigma) * gamma,
        Scheme::IsotropicEuler { .. } => {
            (contraction * contraction + dim as f64 * sigma * sigma * gamma).ln()
        }
    }
}

/// Runs `scheme` against a frozen anchor for an ensemble the caller built and
/// fits the per-step log-multiplier of the second moment about the anchor.
pub fn anchored_decay_from(
    ens: &mut Ensemble,
    anchor: &[f64],
    scheme: Scheme,
    lambda: f64,
    sigma: f64,
    gamma: f64,
    n_steps: usize,
) -> Result<AnchoredDecayFit> {
    let first = ens.second_moment_about(anchor)?;
    if first == 0.0 {
        return Err(CboError::DegenerateEnsemble);
    }
    if n_steps < 2 {
        return Err(CboError::InvalidConfig("anchored run needs >= 2 steps".into()));
    }
    let targets: Vec<usize> = (0..ens.n_particles()).collect();
    let mut log_moments = Vec::with_capacity(n_steps + 1);
    log_moments.push(first.ln());
    for _ in 0..n_steps {
        match scheme {
            Scheme::Euler => euler_update(ens, &targets, anchor, lambda, sigma, gamma)?,
            Scheme::Splitting => splitting_update(ens, &targets, anchor, lambda, sigma, gamma)?,
            Scheme::ExactGbm => exact_gbm_update(ens, &targets, anchor, lambda, sigma, gamma)?,
            Scheme::IsotropicEuler { .. } => {
                isotropic_update(ens, &targets, anchor, lambda, sigma, gamma, None)?
            }
        }
        log_moments.push(ens.second_moment_about(anchor)?.ln());
    }

    // Fit over the final 80% of the recorded points, skipping the transient.
    let start = log_moments.len() - (log_moments.len() * 4) / 5;
    let window = &log_moments[start..];
    let slope = ols_slope(window);

    let increments: Vec<f64> = window.windows(2).map(|w| w[1] - w[0]).collect();
    let mean_inc = increments.iter().sum::<f64>() / increments.len() as f64;
    let var_inc = increments
        .iter()
        .map(|x| (x - mean_inc) * (x - mean_inc))
        .sum::<f64>()
        / (increments.len().saturating_sub(1)).max(1) as f64;
    let std_error = (var_inc / increments.len() as f64).sqrt();

    Ok(AnchoredDecayFit {
        slope,
        std_error,
        log_moments,
    })
}

/// Anchored decay with a standard Gaussian cloud about the origin.
pub fn anchored_decay_experiment(
    scheme: Scheme,
    lambda: f64,
    sigma: f64,
    dim: usize,
    n_particles: usize,
    n_steps: usize,
    gamma: f64,
    seed: u64,
) -> Result<AnchoredDecayFit> {
    let mut ens = Ensemble::init(
        &InitSpec::Gaussian {
            mean: 0.0,
            std: 1.0,
        },
        n_particles,
        dim,
        seed,
    )?;
    let anchor = vec![0.0; dim];
    anchored_decay_from(&mut ens, &anchor, scheme, lambda, sigma, gamma, n_steps)
}

fn ols_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, &y) in ys.iter().enumerate() {
        let dt = t as f64 - t_mean;
        num += dt * (y - y_mean);
        den += dt * dt;
    }
    num / den
}

/// Ensemble moments sampled while the consensus refreshes on a coarse grid.
#[derive(Debug, Clone)]
pub struct MomentTrace {
    /// Physical times `step * gamma` of the records.
    pub times: Vec<f64>,
    /// Sample variance about the ensemble mean.
    pub variance: Vec<f64>,
    /// `log` mean Gibbs weight of the ensemble under the full loss.
    pub log_weight: Vec<f64>,
    /// Consensus point at each record.
    pub consensus: Vec<Vec<f64>>,
}

/// Runs the optimizer with the consensus recomputed only every
/// `refresh_every` sub-steps, recording moments at the refresh boundaries.
/// With `refresh_every = 1` the trajectory is the standard loop's.
pub fn semidiscrete_trace(
    obj: &dyn Objective,
    params: CboParams,
    init: &InitSpec,
    n_particles: usize,
    seed: u64,
    refresh_every: usize,
    n_steps: usize,
) -> Result<MomentTrace> {
    let beta = params.beta;
    let gamma = params.gamma;
    let mut run = CboRun::new(obj, params, init, n_particles, seed)?
        .with_refresh_every(refresh_every)?;

    let mut trace = MomentTrace {
        times: Vec::new(),
        variance: Vec::new(),
        log_weight: Vec::new(),
        consensus: Vec::new(),
    };
    record_moments(&mut trace, run.ensemble(), obj, beta, 0.0, &[])?;

    for _ in 0..n_steps {
        let outcome = run.step()?;
        if run.steps_done() % refresh_every == 0 {
            let consensus = run.latest_consensus().unwrap_or(&[]).to_vec();
            record_moments(
                &mut trace,
                run.ensemble(),
                obj,
                beta,
                run.steps_done() as f64 * gamma,
                &consensus,
            )?;
        }
        if outcome.stopped.is_some() {
            break;
        }
    }
    Ok(trace)
}

fn record_moments(
    trace: &mut MomentTrace,
    ens: &Ensemble,
    obj: &dyn Objective,
    beta: f64,
    time: f64,
    consensus: &[f64],
) -> Result<()> {
    let losses: Vec<f64> = (0..ens.n_particles())
        .map(|j| obj.eval_full(ens.particle(j)))
        .collect();
    trace.times.push(time);
    trace.variance.push(ens.variance());
    trace.log_weight.push(log_mean_weight(&losses, beta)?);
    trace.consensus.push(consensus.to_vec());
    Ok(())
}

/// Soft-min gaps `laplace_estimate(losses, beta) - L_m` over a fixed sample
/// drawn from `init`, one gap per requested inverse temperature.
pub fn laplace_gap_experiment(
    obj: &dyn Objective,
    init: &InitSpec,
    n_samples: usize,
    betas: &[f64],
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let known = obj
        .known_min()
        .ok_or(CboError::Unsupported("gap experiment needs a known minimum"))?;
    let sample = Ensemble::init(init, n_samples, obj.dim(), seed)?;
    let losses: Vec<f64> = (0..n_samples)
        .map(|j| obj.eval_full(sample.particle(j)))
        .collect();
    betas
        .iter()
        .map(|&beta| Ok((beta, laplace_estimate(&losses, beta)? - known.value)))
        .collect()
}

/// Samples one Gaussian vector; used by harness-side scatter diagnostics.
pub fn gaussian_point(dim: usize, mean: f64, std: f64, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, 0);
    (0..dim)
        .map(|_| mean + std * rng.sample::<f64, _>(StandardNormal))
        .collect()
}
