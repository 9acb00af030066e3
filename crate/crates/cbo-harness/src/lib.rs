//! Experiment harness for the `cbo` library: configuration loading, dataset
//! ingestion, seeded experiment execution, and CSV reporting.

pub mod config;
pub mod data;
pub mod experiment;
pub mod idx;

pub use config::{ConfigError, ExperimentConfig};
pub use experiment::HarnessError;
