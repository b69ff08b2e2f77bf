//! Experiment runner for `sonata-core`: TOML configs, parallel Monte-Carlo
//! trials, per-trial trace CSVs and an aggregate CSV of trial means.

pub mod config;
pub mod experiment;
pub mod presets;

pub use config::{load_config, ConfigError, ExperimentConfig};
pub use experiment::{run_experiment, simulate, ExperimentSummary, HarnessError};
