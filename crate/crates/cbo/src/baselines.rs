//! Comparison methods run under the same interfaces: mini-batch stochastic
//! gradient descent, and the original isotropic-noise consensus scheme whose
//! fluctuation amplitude couples all coordinates through the distance norm.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::batching::{sample_data_batch, DataBatch};
use crate::dynamics::isotropic_update;
use crate::ensemble::{stream_rng, Ensemble, InitSpec};
use crate::error::{CboError, Result};
use crate::objective::Objective;
use crate::params::HeavisideMode;

/// Parameters of the SGD baseline chain.
#[derive(Debug, Clone, Copy)]
pub struct SgdParams {
    pub gamma: f64,
    pub batch_data: usize,
    pub max_iters: usize,
}

impl SgdParams {
    pub fn validate(&self, obj: &dyn Objective) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(CboError::InvalidConfig(format!(
                "sgd gamma must be > 0, got {}",
                self.gamma
            )));
        }
        if self.batch_data == 0 || self.batch_data > obj.n_samples() {
            return Err(CboError::InvalidConfig(format!(
                "sgd batch size {} out of range for {} samples",
                self.batch_data,
                obj.n_samples()
            )));
        }
        if !obj.has_gradients() {
            return Err(CboError::Unsupported(
                "sgd requires per-sample gradients",
            ));
        }
        Ok(())
    }
}

/// One SGD update: `x - (gamma / m) * sum_{i in batch} grad l_i(x)`.
pub fn sgd_step(x: &[f64], obj: &dyn Objective, batch: &DataBatch, gamma: f64) -> Result<Vec<f64>> {
    let mut out = x.to_vec();
    let m = batch.indices.len() as f64;
    for &i in &batch.indices {
        let g = obj
            .grad_sample(x, i)
            .ok_or(CboError::Unsupported("objective provides no gradients"))?;
        if g.len() != x.len() {
            return Err(CboError::DimensionMismatch {
                expected: x.len(),
                got: g.len(),
            });
        }
        for (o, gi) in out.iter_mut().zip(&g) {
            *o -= gamma * gi / m;
        }
    }
    Ok(out)
}

/// Result of a full SGD chain.
#[derive(Debug, Clone)]
pub struct SgdReport {
    pub final_point: Vec<f64>,
    pub iterations_used: usize,
    pub seed: u64,
}

/// Runs a fixed-budget SGD chain from a point drawn from `init`.
pub fn run_sgd(
    obj: &dyn Objective,
    params: SgdParams,
    init: &InitSpec,
    seed: u64,
) -> Result<SgdReport> {
    params.validate(obj)?;
    let start = Ensemble::init(init, 1, obj.dim(), seed)?;
    let mut x = start.particle(0).to_vec();
    let mut rng = stream_rng(seed, u64::MAX);
    for _ in 0..params.max_iters {
        let batch = sample_data_batch(obj.n_samples(), params.batch_data, &mut rng)?;
        x = sgd_step(&x, obj, &batch, params.gamma)?;
    }
    Ok(SgdReport {
        final_point: x,
        iterations_used: params.max_iters,
        seed,
    })
}

/// Parameters of the isotropic consensus baseline step.
#[derive(Debug, Clone, Copy)]
pub struct IsotropicCboParams {
    pub lambda: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub heaviside: HeavisideMode,
}

/// Moves the listed particles toward `x_star` with norm-proportional noise:
/// `X <- X - lambda gamma H(L(X) - L(x_star)) (X - x_star) + sigma sqrt(gamma) |X - x_star| z`.
///
/// With `HeavisideMode::Off` the drift applies unconditionally. The logistic
/// mode needs the particles' losses and the loss at the consensus to ramp the
/// drift down for particles already better than the consensus.
pub fn isotropic_cbo_step(
    ens: &mut Ensemble,
    targets: &[usize],
    x_star: &[f64],
    params: &IsotropicCboParams,
    target_losses: Option<&[f64]>,
    loss_at_consensus: Option<f64>,
) -> Result<()> {
    let factors = match params.heaviside {
        HeavisideMode::Off => None,
        HeavisideMode::Logistic { epsilon } => {
            let losses = target_losses.ok_or(CboError::Unsupported(
                "logistic cutoff needs per-particle losses",
            ))?;
            let ref_loss = loss_at_consensus.ok_or(CboError::Unsupported(
                "logistic cutoff needs the loss at the consensus",
            ))?;
            if losses.len() != targets.len() {
                return Err(CboError::DimensionMismatch {
                    expected: targets.len(),
                    got: losses.len(),
                });
            }
            Some(
                losses
                    .iter()
                    .map(|l| 0.5 * (1.0 + ((l - ref_loss) / epsilon).tanh()))
                    .collect::<Vec<f64>>(),
            )
        }
    };
    isotropic_update(
        ens,
        targets,
        x_star,
        params.lambda,
        params.sigma,
        params.gamma,
        factors.as_deref(),
    )
}

/// Draws a standard normal vector; exposed for tests that need raw isotropic
/// kicks outside an ensemble.
pub fn standard_normal_vec<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}
