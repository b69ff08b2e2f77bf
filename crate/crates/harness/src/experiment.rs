//! Monte-Carlo orchestration, per-trial traces and the aggregate table.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sonata_core::baselines::run_baseline;
use sonata_core::sonata::{run_with_observer, write_trace_csv, RunOptions, TraceRecord};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, Method};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("trial {trial}, method {method}: {message}")]
    Run {
        trial: usize,
        method: String,
        message: String,
    },
    #[error("writing {path}: {message}")]
    Output { path: PathBuf, message: String },
}

/// Header of the aggregate CSV.
pub const AGGREGATE_HEADER: &str =
    "iter,msg_exchanges,mean_log10_J,mean_log10_J_inf,mean_log10_D,mean_log10_D_inf,mean_NMSE";

/// Floor applied before taking `log10`, so exact zeros stay finite.
pub const LOG_FLOOR: f64 = 1e-300;

/// Trial means at one logged iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub iter: usize,
    /// Mean over trials of the cumulative message count.
    pub msg_exchanges: f64,
    pub mean_log10_j: f64,
    pub mean_log10_j_inf: f64,
    pub mean_log10_d: f64,
    pub mean_log10_d_inf: f64,
    /// NaN when the problem has no reference point.
    pub mean_nmse: f64,
}

impl AggregateRow {
    fn csv_fields(&self) -> [String; 7] {
        [
            self.iter.to_string(),
            format!("{:?}", self.msg_exchanges),
            format!("{:?}", self.mean_log10_j),
            format!("{:?}", self.mean_log10_j_inf),
            format!("{:?}", self.mean_log10_d),
            format!("{:?}", self.mean_log10_d_inf),
            format!("{:?}", self.mean_nmse),
        ]
    }
}

/// `log10(max(v, floor))`, keeping NaN from diverged runs visible.
fn log10_floor(v: f64) -> f64 {
    if v.is_nan() {
        v
    } else {
        v.max(LOG_FLOOR).log10()
    }
}

/// Averages trials at the iterations logged in every trial. The mean is
/// taken in trial order, so the result does not depend on the order in
/// which trials ran.
pub fn aggregate(trials: &[Vec<TraceRecord>]) -> Vec<AggregateRow> {
    let Some(first) = trials.first() else {
        return Vec::new();
    };
    let count = trials.len() as f64;
    let mut rows = Vec::new();
    for rec in first {
        let at: Option<Vec<&TraceRecord>> = trials
            .iter()
            .map(|t| t.iter().find(|r| r.iter == rec.iter))
            .collect();
        let Some(at) = at else { continue };
        let mean = |f: &dyn Fn(&TraceRecord) -> f64| at.iter().map(|r| f(r)).sum::<f64>() / count;
        rows.push(AggregateRow {
            iter: rec.iter,
            msg_exchanges: mean(&|r| r.msg_exchanges as f64),
            mean_log10_j: mean(&|r| log10_floor(r.j)),
            mean_log10_j_inf: mean(&|r| log10_floor(r.j_inf)),
            mean_log10_d: mean(&|r| log10_floor(r.d)),
            mean_log10_d_inf: mean(&|r| log10_floor(r.d_inf)),
            mean_nmse: mean(&|r| r.nmse.unwrap_or(f64::NAN)),
        });
    }
    rows
}

pub fn write_aggregate_csv<W: Write>(out: W, rows: &[AggregateRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_HEADER.split(','))?;
    for r in rows {
        w.write_record(r.csv_fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Messages sent before the Euclidean stationarity measure first drops to
/// `threshold`, if it does.
pub fn messages_to_reach(records: &[TraceRecord], threshold: f64) -> Option<u64> {
    records.iter().find(|r| r.j <= threshold).map(|r| r.msg_exchanges)
}

/// Results of one method.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub name: String,
    /// One trace per trial, in trial order.
    pub trials: Vec<Vec<TraceRecord>>,
    pub aggregate: Vec<AggregateRow>,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub methods: Vec<MethodResult>,
}

impl ExperimentSummary {
    pub fn method(&self, name: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.name == name)
    }
}

/// Runs one trial of every method on the shared instance of that trial.
fn run_trial(cfg: &ExperimentConfig, methods: &[Method], trial: usize) -> Result<Vec<Vec<TraceRecord>>, HarnessError> {
    let seed = cfg.base_seed + trial as u64;
    let problem = cfg.problem.build(seed)?;
    let seq = cfg.graph.build(cfg.problem.num_agents, seed)?;
    let mut opts = RunOptions::new(cfg.n_iters, seed);
    opts.log_every = cfg.log_every;
    methods
        .iter()
        .zip(&cfg.algorithms)
        .map(|(m, entry)| {
            match m {
                Method::Sonata(c) => run_with_observer(&problem, c, &seq, &opts, &mut |_| {}),
                Method::Baseline(c) => run_baseline(&problem, c, &seq, &opts),
            }
            .map_err(|e| HarnessError::Run {
                trial,
                method: entry.name.clone(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Runs every trial in parallel and aggregates; writes nothing.
pub fn simulate(cfg: &ExperimentConfig) -> Result<ExperimentSummary, HarnessError> {
    cfg.validate()?;
    let methods = cfg
        .algorithms
        .iter()
        .map(|a| a.build(cfg.problem.num_agents))
        .collect::<Result<Vec<_>, _>>()?;
    let per_trial: Vec<Vec<Vec<TraceRecord>>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, &methods, t))
        .collect::<Result<_, _>>()?;
    let mut by_method: Vec<Vec<Vec<TraceRecord>>> = vec![Vec::with_capacity(cfg.trials); methods.len()];
    for trial in per_trial {
        for (k, records) in trial.into_iter().enumerate() {
            by_method[k].push(records);
        }
    }
    let methods = cfg
        .algorithms
        .iter()
        .zip(by_method)
        .map(|(a, trials)| MethodResult {
            name: a.name.clone(),
            aggregate: aggregate(&trials),
            trials,
        })
        .collect();
    Ok(ExperimentSummary { methods })
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path).map(BufWriter::new).map_err(|e| HarnessError::Output {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn csv_failure(path: &Path) -> impl Fn(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::Output {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes `<name>_trial<t>.csv` and `<name>_aggregate.csv` under `dir`.
pub fn write_summary(dir: &Path, summary: &ExperimentSummary) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::Output {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut written = Vec::new();
    for m in &summary.methods {
        for (t, records) in m.trials.iter().enumerate() {
            let path = dir.join(format!("{}_trial{t}.csv", m.name));
            write_trace_csv(create(&path)?, records).map_err(csv_failure(&path))?;
            written.push(path);
        }
        let path = dir.join(format!("{}_aggregate.csv", m.name));
        write_aggregate_csv(create(&path)?, &m.aggregate).map_err(csv_failure(&path))?;
        written.push(path);
    }
    Ok(written)
}

/// Simulates, then writes all CSVs to `cfg.output`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary, HarnessError> {
    let summary = simulate(cfg)?;
    write_summary(&cfg.output, &summary)?;
    Ok(summary)
}
