//! Experiment execution: seeded success-rate studies, classifier training
//! curves, and moment diagnostics, all emitting deterministic CSV files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use cbo::baselines::{run_sgd, SgdParams};
use cbo::diagnostics::{
    anchored_decay_experiment, anchored_expected_slope, compute_certificate,
    laplace_gap_experiment, semidiscrete_trace,
};
use cbo::ensemble::{Ensemble, InitSpec};
use cbo::objective::Objective;
use cbo::objectives::{test_accuracy, LabeledDataset, SoftmaxNet};
use cbo::{
    CboParams, CboRun, ConsensusMode, HeavisideMode, Schedule, Scheme, StallConfig, UpdateMode,
};

use crate::config::{
    AnchoredSchemeKind, ConfigError, ConsensusModeKind, DatasetSpec, DiagnosticSpec,
    ExperimentConfig, HeavisideKind, InitConfig, MethodKind, MethodSpec, ScheduleKind, SchemeKind,
    UpdateModeKind,
};
use crate::idx::{load_idx, IdxError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error("run failed: {0}")]
    Run(#[from] cbo::CboError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// Exit code contract: 2 for configuration problems, 3 for runtime ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 3,
        }
    }
}

fn bad_config(field: &str, reason: impl Into<String>) -> HarnessError {
    HarnessError::Config(ConfigError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    })
}

/// Builds the configured objective; the classifier needs the dataset and is
/// assembled in the training path instead.
pub fn build_objective(config: &ExperimentConfig) -> Result<Box<dyn Objective>, HarnessError> {
    use crate::config::ObjectiveSpec::*;
    match &config.objective {
        Rastrigin { dim, shift, lift } => Ok(Box::new(cbo::objectives::Rastrigin::new(
            *dim, *shift, *lift,
        ))),
        Oscillatory {
            n_samples,
            sample_seed,
        } => Ok(Box::new(cbo::objectives::Oscillatory::new(
            *n_samples,
            *sample_seed,
        ))),
        Quadratic {
            dim,
            center,
            offset,
        } => Ok(Box::new(cbo::Quadratic::with_center(
            vec![*center; *dim],
            *offset,
        ))),
        SoftmaxNet => Err(bad_config(
            "objective",
            "softmax-net runs under the train command with a dataset",
        )),
    }
}

pub fn build_init(init: Option<InitConfig>) -> Result<InitSpec, HarnessError> {
    match init {
        Some(InitConfig::Uniform { lo, hi }) => Ok(InitSpec::UniformBox { lo, hi }),
        Some(InitConfig::Gaussian { mean, std }) => Ok(InitSpec::Gaussian { mean, std }),
        None => Err(bad_config("init", "section is required for this command")),
    }
}

fn build_schedule(spec: &MethodSpec) -> Schedule {
    match spec.sigma_schedule {
        ScheduleKind::Constant => Schedule::Constant(spec.sigma),
        ScheduleKind::LogDecay => Schedule::LogDecay { base: spec.sigma },
        ScheduleKind::Geometric => Schedule::Geometric {
            base: spec.sigma,
            rate: spec.sigma_decay_rate,
        },
    }
}

fn build_scheme(spec: &MethodSpec) -> Scheme {
    match spec.kind {
        MethodKind::IsotropicCbo => Scheme::IsotropicEuler {
            heaviside: match spec.heaviside {
                HeavisideKind::Off => HeavisideMode::Off,
                HeavisideKind::Logistic => HeavisideMode::Logistic {
                    epsilon: spec.heaviside_epsilon,
                },
            },
        },
        _ => match spec.scheme {
            SchemeKind::Euler => Scheme::Euler,
            SchemeKind::Splitting => Scheme::Splitting,
            SchemeKind::ExactGbm => Scheme::ExactGbm,
        },
    }
}

/// Effective data batch: 0 means full loss, and an oversized request is
/// capped at the sample count.
fn effective_batch_data(requested: usize, n_samples: usize) -> Option<usize> {
    if requested == 0 || n_samples == 0 {
        None
    } else {
        Some(requested.min(n_samples))
    }
}

pub fn build_cbo_params(spec: &MethodSpec, obj: &dyn Objective) -> CboParams {
    let mut params = CboParams::new(
        spec.lambda,
        spec.sigma,
        spec.beta,
        spec.gamma,
        spec.batch_particles,
    );
    params.sigma = build_schedule(spec);
    params.batch_data = effective_batch_data(spec.batch_data, obj.n_samples());
    params.update_mode = match spec.update_mode {
        UpdateModeKind::Partial => UpdateMode::Partial,
        UpdateModeKind::Full => UpdateMode::Full,
    };
    params.consensus_mode = match spec.consensus_mode {
        ConsensusModeKind::Weighted => ConsensusMode::Weighted,
        ConsensusModeKind::Argmin => ConsensusMode::Argmin,
    };
    params.scheme = build_scheme(spec);
    params.epsilon_stop = spec.epsilon_stop;
    params.max_iters = spec.max_iters;
    params.trace_stride = spec.trace_stride;
    params.stall = StallConfig {
        enabled: spec.stall.enabled,
        epsilon_stall: spec.stall.epsilon_stall,
        kick_sigma: spec.stall.kick_sigma,
        max_restarts: spec.stall.max_restarts,
    };
    params
}

/// One per-repetition record of a success experiment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunRow {
    pub seed: u64,
    pub success: bool,
    pub final_distance: f64,
    pub iterations: usize,
    pub wall_ms: f64,
}

/// One per-method aggregate row.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub success_rate: f64,
    pub mean_distance: f64,
    pub mean_iterations: f64,
    pub mean_wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub label: String,
    pub rows: Vec<RunRow>,
    pub summary: SummaryRow,
}

/// Success rates per method over seeded repetitions.
#[derive(Debug, Clone)]
pub struct SuccessTable {
    pub methods: Vec<MethodOutcome>,
}

fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn within_box_threshold(point: &[f64], target: &[f64], threshold: f64) -> bool {
    point
        .iter()
        .zip(target)
        .all(|(x, t)| (x - t).abs() < threshold)
}

fn run_one_rep(
    obj: &dyn Objective,
    spec: &MethodSpec,
    init: &InitSpec,
    seed: u64,
    target: &[f64],
    threshold: f64,
) -> Result<RunRow, HarnessError> {
    match spec.kind {
        MethodKind::Sgd => {
            let params = SgdParams {
                gamma: spec.gamma,
                batch_data: effective_batch_data(spec.batch_data, obj.n_samples())
                    .unwrap_or(obj.n_samples()),
                max_iters: spec.max_iters,
            };
            let start = Instant::now();
            let report = run_sgd(obj, params, init, seed)?;
            Ok(RunRow {
                seed,
                success: within_box_threshold(&report.final_point, target, threshold),
                final_distance: euclidean_distance(&report.final_point, target),
                iterations: report.iterations_used,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            })
        }
        _ => {
            let params = build_cbo_params(spec, obj);
            let run = CboRun::new(obj, params, init, spec.n_particles, seed)?;
            let report = run.run()?;
            Ok(RunRow {
                seed,
                success: within_box_threshold(&report.final_consensus, target, threshold),
                final_distance: euclidean_distance(&report.final_consensus, target),
                iterations: report.iterations_used,
                wall_ms: report.wall_time_ms,
            })
        }
    }
}

/// Runs every method for the configured repetitions and writes per-run and
/// summary CSVs. Repetition `i` uses seed `base_seed + i`; repetitions run on
/// the worker pool and land in the output in seed order.
pub fn run_success_experiment(config: &ExperimentConfig) -> Result<SuccessTable, HarnessError> {
    if config.methods.is_empty() {
        return Err(bad_config("method", "at least one [[method]] is required"));
    }
    let obj = build_objective(config)?;
    let known = obj.known_min().ok_or_else(|| {
        bad_config(
            "objective",
            "success experiments need an objective with a known minimizer",
        )
    })?;
    let init = build_init(config.init)?;

    std::fs::create_dir_all(&config.output_dir)?;
    let mut methods = Vec::new();
    for spec in &config.methods {
        let rows: Result<Vec<RunRow>, HarnessError> = (0..config.repetitions)
            .into_par_iter()
            .map(|i| {
                run_one_rep(
                    obj.as_ref(),
                    spec,
                    &init,
                    config.base_seed + i as u64,
                    &known.point,
                    config.success_threshold,
                )
            })
            .collect();
        let rows = rows?;

        let n = rows.len() as f64;
        let summary = SummaryRow {
            method: spec.label(),
            success_rate: rows.iter().filter(|r| r.success).count() as f64 / n,
            mean_distance: rows.iter().map(|r| r.final_distance).sum::<f64>() / n,
            mean_iterations: rows.iter().map(|r| r.iterations as f64).sum::<f64>() / n,
            mean_wall_ms: rows.iter().map(|r| r.wall_ms).sum::<f64>() / n,
        };
        write_csv(
            &config.output_dir.join(format!("runs_{}.csv", file_label(&spec.label()))),
            &rows,
        )?;
        methods.push(MethodOutcome {
            label: spec.label(),
            rows,
            summary,
        });
    }

    let summaries: Vec<SummaryRow> = methods.iter().map(|m| m.summary.clone()).collect();
    write_csv(&config.output_dir.join("summary.csv"), &summaries)?;
    Ok(SuccessTable { methods })
}

/// One row of a training curve.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub test_accuracy: f64,
    pub train_loss_estimate: f64,
    pub wall_ms: f64,
}

/// Loads the configured dataset pair (train, test).
pub fn load_dataset(
    spec: &DatasetSpec,
) -> Result<(LabeledDataset, LabeledDataset), HarnessError> {
    match spec {
        DatasetSpec::Blobs {
            input_dim,
            n_train,
            n_test,
            noise,
            seed,
        } => Ok(crate::data::synthetic_blobs(
            *input_dim, *n_train, *n_test, *noise, *seed,
        )),
        DatasetSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => {
            let train = load_idx(train_images, train_labels)?;
            let test = load_idx(test_images, test_labels)?;
            Ok((train, test))
        }
    }
}

/// Trains each method on the classifier objective, evaluating test accuracy
/// at the consensus after every epoch. One epoch is `ceil(n / m)` data-batch
/// draws.
pub fn run_training_experiment(
    config: &ExperimentConfig,
) -> Result<Vec<(String, Vec<EpochRow>)>, HarnessError> {
    let dataset = config
        .dataset
        .as_ref()
        .ok_or_else(|| bad_config("dataset", "training needs a [dataset] section"))?;
    let epochs = config
        .train
        .ok_or_else(|| bad_config("train", "training needs a [train] section"))?
        .epochs;
    if config.methods.is_empty() {
        return Err(bad_config("method", "at least one [[method]] is required"));
    }
    for m in &config.methods {
        if m.kind == MethodKind::Sgd {
            return Err(bad_config(
                "method",
                "the classifier objective provides no per-sample gradients; sgd cannot train it",
            ));
        }
    }

    let (train_set, test_set) = load_dataset(dataset)?;
    if test_set.is_empty() {
        return Err(bad_config("dataset", "test split is empty"));
    }
    let net = SoftmaxNet::new(train_set);
    let init = match config.init {
        Some(cfg) => build_init(Some(cfg))?,
        None => InitSpec::Gaussian {
            mean: 0.0,
            std: 1.0,
        },
    };

    std::fs::create_dir_all(&config.output_dir)?;
    let mut curves = Vec::new();
    for spec in &config.methods {
        let params = build_cbo_params(spec, &net);
        let m = params.batch_data.unwrap_or(net.n_samples());
        let steps_per_epoch = net.n_samples().div_ceil(m);

        let start = Instant::now();
        let mut run = CboRun::new(&net, params, &init, spec.n_particles, config.base_seed)?;

        // Epoch 0: the untrained ensemble, evaluated at its mean.
        let mean = run.ensemble().mean();
        let mut rows = vec![EpochRow {
            epoch: 0,
            test_accuracy: test_accuracy(&mean, &test_set)?,
            train_loss_estimate: net.eval_full(&mean),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        }];

        'epochs: for epoch in 1..=epochs {
            for _ in 0..steps_per_epoch {
                let outcome = run.step()?;
                if outcome.stopped.is_some() {
                    let x = run.latest_consensus().expect("stopped run has a consensus");
                    rows.push(EpochRow {
                        epoch,
                        test_accuracy: test_accuracy(x, &test_set)?,
                        train_loss_estimate: run.latest_loss_estimate(),
                        wall_ms: start.elapsed().as_secs_f64() * 1e3,
                    });
                    break 'epochs;
                }
            }
            let x = run.latest_consensus().expect("stepped run has a consensus");
            rows.push(EpochRow {
                epoch,
                test_accuracy: test_accuracy(x, &test_set)?,
                train_loss_estimate: run.latest_loss_estimate(),
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }

        write_csv(
            &config.output_dir.join(format!("train_{}.csv", file_label(&spec.label()))),
            &rows,
        )?;
        curves.push((spec.label(), rows));
    }
    Ok(curves)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnchoredRow {
    pub scheme: String,
    pub lambda: f64,
    pub sigma: f64,
    pub dim: usize,
    pub gamma: f64,
    pub n_steps: usize,
    pub slope: f64,
    pub std_error: f64,
    pub expected_slope: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapRow {
    pub beta: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateRow {
    pub mu: f64,
    pub nu: f64,
    pub mu_positive: bool,
    pub nu_ok: bool,
    pub v0: f64,
    pub log_weight0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentRow {
    pub time: f64,
    pub variance: f64,
    pub log_weight: f64,
}

/// Executes every `[[diagnostic]]` block and writes one CSV per block.
pub fn run_diagnostics(config: &ExperimentConfig) -> Result<Vec<PathBuf>, HarnessError> {
    if config.diagnostics.is_empty() {
        return Err(bad_config(
            "diagnostic",
            "at least one [[diagnostic]] is required",
        ));
    }
    std::fs::create_dir_all(&config.output_dir)?;
    let mut written = Vec::new();
    for (i, diag) in config.diagnostics.iter().enumerate() {
        let path = match diag {
            DiagnosticSpec::Anchored {
                scheme,
                lambda,
                sigma,
                dim,
                n_particles,
                n_steps,
                gamma,
                seed,
            } => {
                let cbo_scheme = match scheme {
                    AnchoredSchemeKind::Euler => Scheme::Euler,
                    AnchoredSchemeKind::Splitting => Scheme::Splitting,
                    AnchoredSchemeKind::ExactGbm => Scheme::ExactGbm,
                    AnchoredSchemeKind::IsotropicEuler => Scheme::IsotropicEuler {
                        heaviside: HeavisideMode::Off,
                    },
                };
                let fit = anchored_decay_experiment(
                    cbo_scheme,
                    *lambda,
                    *sigma,
                    *dim,
                    *n_particles,
                    *n_steps,
                    *gamma,
                    *seed,
                )?;
                let row = AnchoredRow {
                    scheme: scheme.to_string(),
                    lambda: *lambda,
                    sigma: *sigma,
                    dim: *dim,
                    gamma: *gamma,
                    n_steps: *n_steps,
                    slope: fit.slope,
                    std_error: fit.std_error,
                    expected_slope: anchored_expected_slope(
                        cbo_scheme, *lambda, *sigma, *gamma, *dim,
                    ),
                };
                let path = config.output_dir.join(format!("diag_{i}_anchored.csv"));
                write_csv(&path, &[row])?;
                path
            }
            DiagnosticSpec::LaplaceGap {
                betas,
                n_samples,
                seed,
            } => {
                let obj = build_objective(config)?;
                let init = build_init(config.init)?;
                let gaps = laplace_gap_experiment(obj.as_ref(), &init, *n_samples, betas, *seed)?;
                let rows: Vec<GapRow> =
                    gaps.into_iter().map(|(beta, gap)| GapRow { beta, gap }).collect();
                let path = config.output_dir.join(format!("diag_{i}_laplace_gap.csv"));
                write_csv(&path, &rows)?;
                path
            }
            DiagnosticSpec::Certificate {
                lambda,
                sigma,
                beta,
                loss_min,
                curvature_bound,
                n_particles,
                seed,
            } => {
                let obj = build_objective(config)?;
                let init = build_init(config.init)?;
                let ens = Ensemble::init(&init, *n_particles, obj.dim(), *seed)?;
                let c_l = curvature_bound
                    .or_else(|| obj.curvature_bound())
                    .ok_or_else(|| {
                        bad_config(
                            "diagnostic.curvature-bound",
                            "no bound configured and the objective provides none",
                        )
                    })?;
                let cert =
                    compute_certificate(&ens, obj.as_ref(), *lambda, *sigma, *beta, *loss_min, c_l)?;
                let row = CertificateRow {
                    mu: cert.mu,
                    nu: cert.nu,
                    mu_positive: cert.mu_positive,
                    nu_ok: cert.nu_ok,
                    v0: cert.v0,
                    log_weight0: cert.log_weight0,
                };
                let path = config.output_dir.join(format!("diag_{i}_certificate.csv"));
                write_csv(&path, &[row])?;
                path
            }
            DiagnosticSpec::Semidiscrete {
                refresh_every,
                n_steps,
                seed,
            } => {
                let obj = build_objective(config)?;
                let init = build_init(config.init)?;
                let spec = config
                    .methods
                    .iter()
                    .find(|m| m.kind != MethodKind::Sgd)
                    .ok_or_else(|| {
                        bad_config("method", "semidiscrete diagnostics need a particle method")
                    })?;
                let params = build_cbo_params(spec, obj.as_ref());
                let trace = semidiscrete_trace(
                    obj.as_ref(),
                    params,
                    &init,
                    spec.n_particles,
                    *seed,
                    *refresh_every,
                    *n_steps,
                )?;
                let rows: Vec<MomentRow> = trace
                    .times
                    .iter()
                    .zip(&trace.variance)
                    .zip(&trace.log_weight)
                    .map(|((&time, &variance), &log_weight)| MomentRow {
                        time,
                        variance,
                        log_weight,
                    })
                    .collect();
                let path = config.output_dir.join(format!("diag_{i}_semidiscrete.csv"));
                write_csv(&path, &rows)?;
                path
            }
        };
        written.push(path);
    }
    Ok(written)
}

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Serializes rows with a header; row order is the iteration order, so output
/// bytes are a pure function of the data.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

pub fn read_run_rows(path: &Path) -> Result<Vec<RunRow>, HarnessError> {
    read_csv(path)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, HarnessError> {
    read_csv(path)
}

pub fn read_epoch_rows(path: &Path) -> Result<Vec<EpochRow>, HarnessError> {
    read_csv(path)
}
