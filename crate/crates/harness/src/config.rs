//! Experiment files: TOML with a `[problem]` table, an optional `[graph]`
//! table and one `[[algorithm]]` table per method. Unknown keys are
//! rejected. See `presets/` for complete examples.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sonata_core::baselines::{BaselineConfig, BaselineKind};
use sonata_core::graph::{load_graph_file, GraphModel, GraphSequence};
use sonata_core::problems::{
    make_distributed_pca, make_sparse_regression, PcaSource, ProblemInstance, RegKind, Regularizer,
    SparseRegressionParams,
};
use sonata_core::sonata::{
    apply_preset, AlgorithmConfig, Mixing, Preset, StepRule, StepSizeSchedule, WeightBuilder,
};
use sonata_core::surrogates::{SurrogateKind, SurrogateSpec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

/// A complete experiment: one problem family, one graph model and the
/// methods compared on it. Trial `t` uses seed `base_seed + t` for data,
/// graph and initial point, shared by every method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_iters")]
    pub n_iters: usize,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "one")]
    pub log_every: usize,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub graph: GraphConfig,
    #[serde(rename = "algorithm")]
    pub algorithms: Vec<AlgorithmEntry>,
}

fn default_iters() -> usize {
    1000
}
fn one() -> usize {
    1
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    SparseRegression,
    Dpca,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegName {
    None,
    L1,
    Exp,
    LpPlus,
    LpMinus,
    Scad,
    Log,
}

impl From<RegName> for RegKind {
    fn from(r: RegName) -> Self {
        match r {
            RegName::None => RegKind::None,
            RegName::L1 => RegKind::L1,
            RegName::Exp => RegKind::Exp,
            RegName::LpPlus => RegKind::LpPlus,
            RegName::LpMinus => RegKind::LpMinus,
            RegName::Scad => RegKind::Scad,
            RegName::Log => RegKind::Log,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaSourceName {
    Synthetic,
    File,
}

/// Problem family and sizes. Fields not used by the chosen `kind` must be
/// left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    pub num_agents: usize,
    pub dim: Option<usize>,
    pub rows_per_agent: Option<usize>,
    /// Sparse regression: variance of the additive noise.
    pub noise_variance: Option<f64>,
    /// Sparse regression: fraction of ground-truth entries zeroed.
    pub sparsity: Option<f64>,
    pub regularizer: Option<RegName>,
    pub theta: Option<f64>,
    pub lambda: Option<f64>,
    pub scad_a: Option<f64>,
    pub eps: Option<f64>,
    pub exponent: Option<f64>,
    /// Distributed PCA: where samples come from.
    pub source: Option<PcaSourceName>,
    /// Distributed PCA: headerless numeric CSV, one sample per row.
    pub path: Option<PathBuf>,
    /// Distributed PCA: seed of the covariance, fixed across trials.
    pub covariance_seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphName {
    #[default]
    RingPlusRandom,
    StaticStronglyConnected,
    StaticUndirected,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    #[serde(default)]
    pub model: GraphName,
    /// Connectivity window B.
    #[serde(default = "one")]
    pub window: usize,
    /// Snapshot file for `model = "file"`.
    pub path: Option<PathBuf>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            model: GraphName::default(),
            window: 1,
            path: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    #[default]
    Sonata,
    SubgradientPush,
    GradientProjection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateName {
    #[default]
    Linearization,
    PartialLinearization,
    PartialConvexification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepName {
    #[default]
    Recursive,
    Power,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingName {
    #[default]
    Atc,
    Caa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightName {
    #[default]
    PushSum,
    Metropolis,
}

/// One compared method. `preset` (a special-case name such as `"diging"`)
/// overrides `surrogate`, `tau`, `mixing` and `weights`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmEntry {
    pub name: String,
    #[serde(default)]
    pub method: MethodName,
    #[serde(default)]
    pub surrogate: SurrogateName,
    /// Convex block size for partial convexification.
    pub split: Option<usize>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub step: StepName,
    #[serde(default = "default_alpha0")]
    pub alpha0: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    /// Exponent of the power rule `alpha0 / (n + 1)^beta`.
    pub beta: Option<f64>,
    #[serde(default)]
    pub mixing: MixingName,
    #[serde(default)]
    pub weights: WeightName,
    pub preset: Option<String>,
    /// Stop once `M` falls to this value; zero runs the full horizon.
    #[serde(default)]
    pub early_stop: f64,
    /// Stopping tolerance of the inner solver.
    pub inner_tolerance: Option<f64>,
}

fn default_tau() -> f64 {
    1.5
}
fn default_alpha0() -> f64 {
    0.5
}
fn default_mu() -> f64 {
    0.01
}

impl AlgorithmEntry {
    /// Defaults for everything but the name.
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            method: MethodName::default(),
            surrogate: SurrogateName::default(),
            split: None,
            tau: default_tau(),
            step: StepName::default(),
            alpha0: default_alpha0(),
            mu: default_mu(),
            beta: None,
            mixing: MixingName::default(),
            weights: WeightName::default(),
            preset: None,
            early_stop: 0.0,
            inner_tolerance: None,
        }
    }
}

/// A method ready to run.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Sonata(AlgorithmConfig),
    Baseline(BaselineConfig),
}

impl ExperimentConfig {
    /// Parses and validates TOML text.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg = Self::parse(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses TOML text without building anything.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config fields are all TOML-representable")
    }

    /// Checks sizes and names, then builds the base-seed instance and
    /// checks every method against it.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trials == 0 {
            return Err(invalid("trials", "must be positive"));
        }
        if self.log_every == 0 {
            return Err(invalid("log_every", "must be positive"));
        }
        if self.algorithms.is_empty() {
            return Err(invalid("algorithm", "at least one method is required"));
        }
        let mut seen = HashSet::new();
        for a in &self.algorithms {
            if a.name.is_empty()
                || !a
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
            {
                return Err(invalid(
                    "algorithm.name",
                    format!("{:?} must be nonempty and use only letters, digits, '-' and '_'", a.name),
                ));
            }
            if !seen.insert(a.name.as_str()) {
                return Err(invalid("algorithm.name", format!("duplicate name {:?}", a.name)));
            }
        }
        let problem = self.problem.build(self.base_seed)?;
        let seq = self.graph.build(self.problem.num_agents, self.base_seed)?;
        for a in &self.algorithms {
            let field = |f: &str| format!("algorithm.{}.{f}", a.name);
            match a.build(self.problem.num_agents)? {
                Method::Sonata(c) => c.validate(&problem, &seq),
                Method::Baseline(c) => c.validate(&problem, &seq),
            }
            .map_err(|e| invalid(field("settings"), e.to_string()))?;
        }
        Ok(())
    }
}

/// Reads, parses and validates a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ExperimentConfig::from_toml(&text)
}

fn reject(present: bool, field: &str, kind: &str) -> Result<(), ConfigError> {
    if present {
        Err(invalid(format!("problem.{field}"), format!("not used by {kind}")))
    } else {
        Ok(())
    }
}

fn positive(v: usize, field: &str) -> Result<usize, ConfigError> {
    if v == 0 {
        Err(invalid(field, "must be positive"))
    } else {
        Ok(v)
    }
}

impl ProblemConfig {
    /// Desk-scale sparse regression with the log regularizer.
    pub fn sparse_regression(num_agents: usize, dim: usize, rows_per_agent: usize) -> Self {
        Self {
            kind: ProblemKind::SparseRegression,
            num_agents,
            dim: Some(dim),
            rows_per_agent: Some(rows_per_agent),
            noise_variance: Some(0.1),
            sparsity: Some(0.8),
            regularizer: Some(RegName::Log),
            theta: Some(2.0),
            lambda: Some(0.1),
            scad_a: None,
            eps: None,
            exponent: None,
            source: None,
            path: None,
            covariance_seed: None,
        }
    }

    /// Synthetic distributed PCA.
    pub fn dpca(num_agents: usize, dim: usize, rows_per_agent: usize) -> Self {
        Self {
            kind: ProblemKind::Dpca,
            num_agents,
            dim: Some(dim),
            rows_per_agent: Some(rows_per_agent),
            noise_variance: None,
            sparsity: None,
            regularizer: None,
            theta: None,
            lambda: None,
            scad_a: None,
            eps: None,
            exponent: None,
            source: Some(PcaSourceName::Synthetic),
            path: None,
            covariance_seed: Some(0),
        }
    }

    fn regularizer(&self) -> Result<Regularizer, ConfigError> {
        let kind = self.regularizer.unwrap_or(RegName::Log);
        let mut r = Regularizer::new(kind.into(), self.theta.unwrap_or(2.0), self.lambda.unwrap_or(0.1))
            .map_err(|e| invalid("problem.regularizer", e.to_string()))?;
        if let Some(a) = self.scad_a {
            r = r.with_scad_a(a).map_err(|e| invalid("problem.scad_a", e.to_string()))?;
        }
        if let Some(e) = self.eps {
            r = r.with_eps(e).map_err(|e| invalid("problem.eps", e.to_string()))?;
        }
        if let Some(p) = self.exponent {
            r = r.with_exponent(p).map_err(|e| invalid("problem.exponent", e.to_string()))?;
        }
        Ok(r)
    }

    /// The instance of the trial with seed `seed`.
    pub fn build(&self, seed: u64) -> Result<ProblemInstance, ConfigError> {
        let num = positive(self.num_agents, "problem.num_agents")?;
        match self.kind {
            ProblemKind::SparseRegression => {
                let kind = "sparse_regression";
                reject(self.source.is_some(), "source", kind)?;
                reject(self.path.is_some(), "path", kind)?;
                reject(self.covariance_seed.is_some(), "covariance_seed", kind)?;
                let variance = self.noise_variance.unwrap_or(0.1);
                if !(variance >= 0.0) {
                    return Err(invalid("problem.noise_variance", "must be nonnegative"));
                }
                let sparsity = self.sparsity.unwrap_or(0.8);
                if !(0.0..=1.0).contains(&sparsity) {
                    return Err(invalid("problem.sparsity", "must lie in [0, 1]"));
                }
                let params = SparseRegressionParams {
                    num_agents: num,
                    dim: positive(self.dim.unwrap_or(100), "problem.dim")?,
                    rows_per_agent: positive(self.rows_per_agent.unwrap_or(20), "problem.rows_per_agent")?,
                    noise_sigma: variance.sqrt(),
                    sparsity,
                };
                make_sparse_regression(&params, seed, self.regularizer()?)
                    .map_err(|e| invalid("problem", e.to_string()))
            }
            ProblemKind::Dpca => {
                let kind = "dpca";
                for (present, f) in [
                    (self.noise_variance.is_some(), "noise_variance"),
                    (self.sparsity.is_some(), "sparsity"),
                    (self.regularizer.is_some(), "regularizer"),
                    (self.theta.is_some(), "theta"),
                    (self.lambda.is_some(), "lambda"),
                    (self.scad_a.is_some(), "scad_a"),
                    (self.eps.is_some(), "eps"),
                    (self.exponent.is_some(), "exponent"),
                ] {
                    reject(present, f, kind)?;
                }
                let source = match self.source.unwrap_or(PcaSourceName::Synthetic) {
                    PcaSourceName::Synthetic => {
                        reject(self.path.is_some(), "path", "synthetic data")?;
                        PcaSource::Synthetic {
                            rows_per_agent: positive(self.rows_per_agent.unwrap_or(10), "problem.rows_per_agent")?,
                            dim: positive(self.dim.unwrap_or(20), "problem.dim")?,
                            covariance_seed: self.covariance_seed.unwrap_or(0),
                        }
                    }
                    PcaSourceName::File => {
                        reject(self.dim.is_some(), "dim", "file data")?;
                        reject(self.rows_per_agent.is_some(), "rows_per_agent", "file data")?;
                        reject(self.covariance_seed.is_some(), "covariance_seed", "file data")?;
                        let path = self
                            .path
                            .clone()
                            .ok_or_else(|| invalid("problem.path", "required for file data"))?;
                        PcaSource::File(path)
                    }
                };
                make_distributed_pca(num, &source, seed).map_err(|e| invalid("problem", e.to_string()))
            }
        }
    }
}

impl GraphConfig {
    /// The sequence of the trial with seed `seed`.
    pub fn build(&self, num_agents: usize, seed: u64) -> Result<GraphSequence, ConfigError> {
        let window = positive(self.window, "graph.window")?;
        if num_agents < 2 {
            return Err(invalid("problem.num_agents", "a network needs at least 2 agents"));
        }
        if self.model != GraphName::File && self.path.is_some() {
            return Err(invalid("graph.path", "only used with model = \"file\""));
        }
        let model = match self.model {
            GraphName::RingPlusRandom => GraphModel::RingPlusRandom,
            GraphName::StaticStronglyConnected => GraphModel::StaticStronglyConnected(None),
            GraphName::StaticUndirected => GraphModel::StaticUndirected(None),
            GraphName::File => {
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| invalid("graph.path", "required for model = \"file\""))?;
                let list = load_graph_file(path, num_agents)
                    .map_err(|e| invalid("graph.path", e.to_string()))?;
                GraphModel::Custom(list)
            }
        };
        Ok(GraphSequence::new(model, seed, num_agents, window))
    }
}

impl AlgorithmEntry {
    fn schedule(&self) -> Result<StepSizeSchedule, ConfigError> {
        let rule = match self.step {
            StepName::Recursive => StepRule::DiminishingRecursive {
                alpha0: self.alpha0,
                mu: self.mu,
            },
            StepName::Power => StepRule::DiminishingPower {
                alpha0: self.alpha0,
                beta: self
                    .beta
                    .ok_or_else(|| invalid(format!("algorithm.{}.beta", self.name), "required by the power rule"))?,
            },
            StepName::Constant => StepRule::Constant(self.alpha0),
        };
        rule.validate()
            .map_err(|e| invalid(format!("algorithm.{}.step", self.name), e.to_string()))?;
        Ok(StepSizeSchedule::new(rule))
    }

    /// The method for `num_agents` agents.
    pub fn build(&self, num_agents: usize) -> Result<Method, ConfigError> {
        let schedule = self.schedule()?;
        let field = |f: &str| format!("algorithm.{}.{f}", self.name);
        if self.method != MethodName::Sonata {
            if self.preset.is_some() {
                return Err(invalid(field("preset"), "presets apply to SONATA only"));
            }
            let kind = match self.method {
                MethodName::SubgradientPush => BaselineKind::SubgradientPush,
                _ => BaselineKind::GradientProjection,
            };
            let mut c = BaselineConfig::new(kind, schedule);
            c.weights = self.weights.into();
            return Ok(Method::Baseline(c));
        }
        let mut cfg = match &self.preset {
            Some(name) => {
                let p = Preset::from_name(name).ok_or_else(|| {
                    let known: Vec<_> = Preset::ALL.iter().map(Preset::name).collect();
                    invalid(field("preset"), format!("unknown preset {name:?}; known: {}", known.join(", ")))
                })?;
                apply_preset(p, num_agents, schedule)
            }
            None => {
                let kind = match self.surrogate {
                    SurrogateName::Linearization => SurrogateKind::Linearization,
                    SurrogateName::PartialLinearization => SurrogateKind::PartialLinearization,
                    SurrogateName::PartialConvexification => SurrogateKind::PartialConvexification {
                        split: self
                            .split
                            .ok_or_else(|| invalid(field("split"), "required by partial convexification"))?,
                    },
                };
                let mut c = AlgorithmConfig::new(SurrogateSpec::new(kind, self.tau), schedule);
                c.mixing = match self.mixing {
                    MixingName::Atc => Mixing::Atc,
                    MixingName::Caa => Mixing::Caa,
                };
                c.weights = self.weights.into();
                c
            }
        };
        if let Some(t) = self.inner_tolerance {
            cfg.surrogate.inner.tolerance = t;
        }
        cfg.early_stop = self.early_stop;
        Ok(Method::Sonata(cfg))
    }
}

impl From<WeightName> for WeightBuilder {
    fn from(w: WeightName) -> Self {
        match w {
            WeightName::PushSum => WeightBuilder::PushSum,
            WeightName::Metropolis => WeightBuilder::Metropolis,
        }
    }
}
