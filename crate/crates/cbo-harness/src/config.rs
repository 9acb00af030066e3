//! Experiment configuration: a strict TOML schema with typo suggestions.
//!
//! Unknown keys are hard errors. Before typed deserialization the raw value
//! tree is walked against the known-key schema so a misspelled key reports
//! its table and the nearest valid name.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("unknown key \"{key}\" in {table}{suggestion}")]
    UnknownKey {
        key: String,
        table: String,
        suggestion: String,
    },
    #[error("invalid value for {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("missing section {0}")]
    MissingSection(&'static str),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub name: String,
    pub output_dir: PathBuf,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_success_threshold")]
    pub success_threshold: f64,
    pub objective: ObjectiveSpec,
    pub init: Option<InitConfig>,
    #[serde(default, rename = "method")]
    pub methods: Vec<MethodSpec>,
    pub dataset: Option<DatasetSpec>,
    pub train: Option<TrainSpec>,
    #[serde(default, rename = "diagnostic")]
    pub diagnostics: Vec<DiagnosticSpec>,
}

fn default_repetitions() -> usize {
    1
}

fn default_success_threshold() -> f64 {
    0.25
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", rename_all_fields = "kebab-case", tag = "kind")]
pub enum ObjectiveSpec {
    Rastrigin {
        dim: usize,
        #[serde(default)]
        shift: f64,
        #[serde(default)]
        lift: f64,
    },
    Oscillatory {
        #[serde(default = "default_oscillatory_samples")]
        n_samples: usize,
        #[serde(default)]
        sample_seed: u64,
    },
    Quadratic {
        dim: usize,
        #[serde(default)]
        center: f64,
        #[serde(default)]
        offset: f64,
    },
    SoftmaxNet,
}

fn default_oscillatory_samples() -> usize {
    20
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", rename_all_fields = "kebab-case", tag = "kind")]
pub enum InitConfig {
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, std: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct MethodSpec {
    pub name: Option<String>,
    pub kind: MethodKind,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub sigma_schedule: ScheduleKind,
    #[serde(default = "default_decay_rate")]
    pub sigma_decay_rate: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub gamma: f64,
    #[serde(default = "default_particles")]
    pub n_particles: usize,
    #[serde(default = "default_batch_particles")]
    pub batch_particles: usize,
    /// Data mini-batch size; 0 evaluates the full loss.
    #[serde(default)]
    pub batch_data: usize,
    #[serde(default)]
    pub update_mode: UpdateModeKind,
    #[serde(default)]
    pub consensus_mode: ConsensusModeKind,
    #[serde(default)]
    pub scheme: SchemeKind,
    #[serde(default = "default_epsilon_stop")]
    pub epsilon_stop: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub heaviside: HeavisideKind,
    #[serde(default = "default_heaviside_epsilon")]
    pub heaviside_epsilon: f64,
    #[serde(default = "default_trace_stride")]
    pub trace_stride: usize,
    #[serde(default)]
    pub stall: StallSpec,
}

fn default_lambda() -> f64 {
    1.0
}
fn default_decay_rate() -> f64 {
    0.99
}
fn default_beta() -> f64 {
    30.0
}
fn default_particles() -> usize {
    100
}
fn default_batch_particles() -> usize {
    20
}
fn default_epsilon_stop() -> f64 {
    1e-3
}
fn default_max_iters() -> usize {
    10_000
}
fn default_heaviside_epsilon() -> f64 {
    1e-2
}
fn default_trace_stride() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    Cbo,
    IsotropicCbo,
    Sgd,
}

impl MethodKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodKind::Cbo => "cbo",
            MethodKind::IsotropicCbo => "isotropic-cbo",
            MethodKind::Sgd => "sgd",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    #[default]
    Constant,
    LogDecay,
    Geometric,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateModeKind {
    #[default]
    Partial,
    Full,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsensusModeKind {
    #[default]
    Weighted,
    Argmin,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    #[default]
    Euler,
    Splitting,
    ExactGbm,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeavisideKind {
    #[default]
    Off,
    Logistic,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct StallSpec {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_epsilon_stall")]
    pub epsilon_stall: f64,
    #[serde(default = "default_kick_sigma")]
    pub kick_sigma: f64,
    #[serde(default = "default_max_restarts")]
    pub max_restarts: usize,
}

fn default_epsilon_stall() -> f64 {
    1e-4
}
fn default_kick_sigma() -> f64 {
    0.1
}
fn default_max_restarts() -> usize {
    10
}

impl Default for StallSpec {
    fn default() -> Self {
        Self {
            enabled: false,
            epsilon_stall: default_epsilon_stall(),
            kick_sigma: default_kick_sigma(),
            max_restarts: default_max_restarts(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", rename_all_fields = "kebab-case", tag = "kind")]
pub enum DatasetSpec {
    Blobs {
        #[serde(default = "default_blob_dim")]
        input_dim: usize,
        #[serde(default = "default_blob_train")]
        n_train: usize,
        #[serde(default = "default_blob_test")]
        n_test: usize,
        #[serde(default = "default_blob_noise")]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

fn default_blob_dim() -> usize {
    16
}
fn default_blob_train() -> usize {
    10_000
}
fn default_blob_test() -> usize {
    10_000
}
fn default_blob_noise() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainSpec {
    pub epochs: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", rename_all_fields = "kebab-case", tag = "kind")]
pub enum DiagnosticSpec {
    Anchored {
        scheme: AnchoredSchemeKind,
        lambda: f64,
        sigma: f64,
        dim: usize,
        #[serde(default = "default_diag_particles")]
        n_particles: usize,
        #[serde(default = "default_diag_steps")]
        n_steps: usize,
        gamma: f64,
        #[serde(default)]
        seed: u64,
    },
    LaplaceGap {
        betas: Vec<f64>,
        #[serde(default = "default_diag_particles")]
        n_samples: usize,
        #[serde(default)]
        seed: u64,
    },
    Certificate {
        lambda: f64,
        sigma: f64,
        beta: f64,
        loss_min: f64,
        curvature_bound: Option<f64>,
        #[serde(default = "default_diag_particles")]
        n_particles: usize,
        #[serde(default)]
        seed: u64,
    },
    Semidiscrete {
        refresh_every: usize,
        #[serde(default = "default_diag_steps")]
        n_steps: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn default_diag_particles() -> usize {
    10_000
}
fn default_diag_steps() -> usize {
    200
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchoredSchemeKind {
    Euler,
    Splitting,
    ExactGbm,
    IsotropicEuler,
}

impl fmt::Display for AnchoredSchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AnchoredSchemeKind::Euler => "euler",
            AnchoredSchemeKind::Splitting => "splitting",
            AnchoredSchemeKind::ExactGbm => "exact-gbm",
            AnchoredSchemeKind::IsotropicEuler => "isotropic-euler",
        };
        f.write_str(s)
    }
}

// Known keys per table, used for the pre-deserialization walk.
const ROOT_KEYS: &[&str] = &[
    "name",
    "output-dir",
    "repetitions",
    "base-seed",
    "success-threshold",
    "objective",
    "init",
    "method",
    "dataset",
    "train",
    "diagnostic",
];
const OBJECTIVE_KEYS: &[&str] = &[
    "kind",
    "dim",
    "shift",
    "lift",
    "n-samples",
    "sample-seed",
    "center",
    "offset",
];
const INIT_KEYS: &[&str] = &["kind", "lo", "hi", "mean", "std"];
const METHOD_KEYS: &[&str] = &[
    "name",
    "kind",
    "lambda",
    "sigma",
    "sigma-schedule",
    "sigma-decay-rate",
    "beta",
    "gamma",
    "n-particles",
    "batch-particles",
    "batch-data",
    "update-mode",
    "consensus-mode",
    "scheme",
    "epsilon-stop",
    "max-iters",
    "heaviside",
    "heaviside-epsilon",
    "trace-stride",
    "stall",
];
const STALL_KEYS: &[&str] = &["enabled", "epsilon-stall", "kick-sigma", "max-restarts"];
const DATASET_KEYS: &[&str] = &[
    "kind",
    "input-dim",
    "n-train",
    "n-test",
    "noise",
    "seed",
    "train-images",
    "train-labels",
    "test-images",
    "test-labels",
];
const TRAIN_KEYS: &[&str] = &["epochs"];
const DIAGNOSTIC_KEYS: &[&str] = &[
    "kind",
    "scheme",
    "lambda",
    "sigma",
    "beta",
    "betas",
    "dim",
    "n-particles",
    "n-samples",
    "n-steps",
    "gamma",
    "loss-min",
    "curvature-bound",
    "refresh-every",
    "seed",
];

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            curr[j + 1] = (prev[j + 1] + 1).min(curr[j] + 1).min(prev[j] + cost);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

fn suggest(key: &str, known: &[&str]) -> String {
    let mut best: Option<(usize, &str)> = None;
    for &candidate in known {
        let d = levenshtein(key, candidate);
        if best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, candidate));
        }
    }
    match best {
        Some((d, candidate)) if d <= 1 + key.len() / 3 => {
            format!("; did you mean \"{candidate}\"?")
        }
        _ => String::new(),
    }
}

fn check_table(
    table: &toml::value::Table,
    known: &[&str],
    label: &str,
) -> Result<(), ConfigError> {
    let known_set: BTreeSet<&str> = known.iter().copied().collect();
    for key in table.keys() {
        if !known_set.contains(key.as_str()) {
            return Err(ConfigError::UnknownKey {
                key: key.clone(),
                table: label.to_string(),
                suggestion: suggest(key, known),
            });
        }
    }
    Ok(())
}

fn check_schema(root: &toml::Value) -> Result<(), ConfigError> {
    let table = root
        .as_table()
        .ok_or(ConfigError::MissingSection("top-level table"))?;
    check_table(table, ROOT_KEYS, "the top level")?;
    if let Some(obj) = table.get("objective").and_then(|v| v.as_table()) {
        check_table(obj, OBJECTIVE_KEYS, "[objective]")?;
    }
    if let Some(init) = table.get("init").and_then(|v| v.as_table()) {
        check_table(init, INIT_KEYS, "[init]")?;
    }
    if let Some(methods) = table.get("method").and_then(|v| v.as_array()) {
        for (i, m) in methods.iter().enumerate() {
            if let Some(m) = m.as_table() {
                check_table(m, METHOD_KEYS, &format!("[[method]] #{}", i + 1))?;
                if let Some(stall) = m.get("stall").and_then(|v| v.as_table()) {
                    check_table(stall, STALL_KEYS, &format!("[method.stall] #{}", i + 1))?;
                }
            }
        }
    }
    if let Some(ds) = table.get("dataset").and_then(|v| v.as_table()) {
        check_table(ds, DATASET_KEYS, "[dataset]")?;
    }
    if let Some(tr) = table.get("train").and_then(|v| v.as_table()) {
        check_table(tr, TRAIN_KEYS, "[train]")?;
    }
    if let Some(diags) = table.get("diagnostic").and_then(|v| v.as_array()) {
        for (i, d) in diags.iter().enumerate() {
            if let Some(d) = d.as_table() {
                check_table(d, DIAGNOSTIC_KEYS, &format!("[[diagnostic]] #{}", i + 1))?;
            }
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_str(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let raw: toml::Value = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        check_schema(&raw)?;
        let config: ExperimentConfig =
            raw.try_into().map_err(|e: toml::de::Error| ConfigError::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_str(&text, path)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.repetitions == 0 {
            return Err(ConfigError::Invalid {
                field: "repetitions".into(),
                reason: "must be >= 1".into(),
            });
        }
        if !(self.success_threshold > 0.0) {
            return Err(ConfigError::Invalid {
                field: "success_threshold".into(),
                reason: "must be > 0".into(),
            });
        }
        let mut labels = BTreeSet::new();
        for m in &self.methods {
            let label = m.label();
            if !labels.insert(label.clone()) {
                return Err(ConfigError::Invalid {
                    field: "method.name".into(),
                    reason: format!("duplicate method label \"{label}\"; set name"),
                });
            }
            m.validate()?;
        }
        if let Some(DatasetSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        }) = &self.dataset
        {
            for p in [train_images, train_labels, test_images, test_labels] {
                if !p.exists() {
                    return Err(ConfigError::Invalid {
                        field: "dataset".into(),
                        reason: format!("file {} does not exist", p.display()),
                    });
                }
            }
        }
        Ok(())
    }

    /// One line per resolved setting, used by `validate` to echo defaults.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "experiment \"{}\": repetitions={} base_seed={} success_threshold={}\n",
            self.name, self.repetitions, self.base_seed, self.success_threshold
        ));
        out.push_str(&format!("objective: {:?}\n", self.objective));
        if let Some(init) = &self.init {
            out.push_str(&format!("init: {init:?}\n"));
        }
        for m in &self.methods {
            out.push_str(&format!(
                "method \"{}\" ({}): lambda={} sigma={} beta={} gamma={} N={} M={} m={} \
                 update={:?} consensus={:?} scheme={:?} eps={} max_iters={}\n",
                m.label(),
                m.kind.as_str(),
                m.lambda,
                m.sigma,
                m.beta,
                m.gamma,
                m.n_particles,
                m.batch_particles,
                m.batch_data,
                m.update_mode,
                m.consensus_mode,
                m.scheme,
                m.epsilon_stop,
                m.max_iters
            ));
        }
        if let Some(ds) = &self.dataset {
            out.push_str(&format!("dataset: {ds:?}\n"));
        }
        if let Some(tr) = &self.train {
            out.push_str(&format!("train: epochs={}\n", tr.epochs));
        }
        for d in &self.diagnostics {
            out.push_str(&format!("diagnostic: {d:?}\n"));
        }
        out
    }
}

impl MethodSpec {
    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| self.kind.as_str().to_string())
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let check_pos = |name: &str, v: f64| -> Result<(), ConfigError> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::Invalid {
                    field: format!("method.{name}"),
                    reason: format!("must be > 0, got {v}"),
                })
            }
        };
        check_pos("gamma", self.gamma)?;
        if self.kind != MethodKind::Sgd {
            check_pos("lambda", self.lambda)?;
            check_pos("beta", self.beta)?;
            check_pos("epsilon_stop", self.epsilon_stop)?;
            if self.sigma < 0.0 {
                return Err(ConfigError::Invalid {
                    field: "method.sigma".into(),
                    reason: "must be >= 0".into(),
                });
            }
            if self.batch_particles == 0 || self.batch_particles > self.n_particles {
                return Err(ConfigError::Invalid {
                    field: "method.batch_particles".into(),
                    reason: format!(
                        "must satisfy 1 <= M <= N; got M={} N={}",
                        self.batch_particles, self.n_particles
                    ),
                });
            }
        }
        if self.max_iters == 0 {
            return Err(ConfigError::Invalid {
                field: "method.max_iters".into(),
                reason: "must be >= 1".into(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "smoke"
output-dir = "out"

[objective]
kind = "quadratic"
dim = 2

[init]
kind = "uniform"
lo = -1.0
hi = 1.0

[[method]]
kind = "cbo"
gamma = 0.01
sigma = 1.0
"#;

    #[test]
    fn minimal_config_populates_defaults() {
        let c = ExperimentConfig::from_str(MINIMAL, Path::new("test.toml")).unwrap();
        assert_eq!(c.repetitions, 1);
        assert_eq!(c.success_threshold, 0.25);
        assert_eq!(c.methods.len(), 1);
        assert_eq!(c.methods[0].beta, 30.0);
        assert_eq!(c.methods[0].n_particles, 100);
        let summary = c.summary();
        assert!(summary.contains("beta=30"));
        assert!(summary.contains("repetitions=1"));
    }

    #[test]
    fn zero_repetitions_is_rejected_by_name() {
        let text = MINIMAL.replace("output-dir = \"out\"", "output-dir = \"out\"\nrepetitions = 0");
        let err = ExperimentConfig::from_str(&text, Path::new("t.toml")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("repetitions"), "{msg}");
    }

    #[test]
    fn misspelled_key_suggests_the_real_one() {
        let text = MINIMAL.replace("sigma = 1.0", "sigmma = 1.0");
        let err = ExperimentConfig::from_str(&text, Path::new("t.toml")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sigmma"), "{msg}");
        assert!(msg.contains("did you mean \"sigma\""), "{msg}");
    }

    #[test]
    fn unknown_key_without_close_match_still_errors() {
        let text = MINIMAL.replace("sigma = 1.0", "zzzzqqqq = 1.0");
        let err = ExperimentConfig::from_str(&text, Path::new("t.toml")).unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { .. }));
    }

    #[test]
    fn parse_error_carries_line_information() {
        let text = "name = \"x\"\noutput_dir = [broken";
        let err = ExperimentConfig::from_str(text, Path::new("t.toml")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn duplicate_method_labels_are_rejected() {
        let text = format!(
            "{MINIMAL}\n[[method]]\nkind = \"cbo\"\ngamma = 0.01\nsigma = 2.0\n"
        );
        let err = ExperimentConfig::from_str(&text, Path::new("t.toml")).unwrap_err();
        assert!(err.to_string().contains("duplicate method label"));
    }

    #[test]
    fn levenshtein_basics() {
        assert_eq!(levenshtein("sigma", "sigma"), 0);
        assert_eq!(levenshtein("sigmma", "sigma"), 1);
        assert_eq!(levenshtein("abc", "xyz"), 3);
    }
}
