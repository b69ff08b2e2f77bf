//! Built-in experiment files, mirroring the sparse regression and
//! distributed PCA studies at full and desk size.

use crate::config::{ConfigError, ExperimentConfig};

/// `(name, TOML text)` of every built-in experiment.
pub const PRESETS: [(&str, &str); 5] = [
    ("sparse_regression_log", include_str!("../presets/sparse_regression_log.toml")),
    ("sparse_regression_log_desk", include_str!("../presets/sparse_regression_log_desk.toml")),
    ("dpca_synthetic", include_str!("../presets/dpca_synthetic.toml")),
    ("dpca_synthetic_desk", include_str!("../presets/dpca_synthetic_desk.toml")),
    ("dpca_file", include_str!("../presets/dpca_file.toml")),
];

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// The parsed preset. It is not validated, since `dpca_file` points at a
/// data file the user supplies.
pub fn preset(name: &str) -> Option<Result<ExperimentConfig, ConfigError>> {
    preset_text(name).map(ExperimentConfig::parse)
}
