//! The SONATA iteration, its special cases and a trace-producing runner.
//!
//! Each iteration every agent solves its convex subproblem for `x~_i`,
//! moves toward it by `alpha_i`, and mixes over the current digraph with
//! push-sum weights. Mixing happens after the local step (ATC) or before it
//! (CAA). The tracker `y_i` follows the network gradient average:
//!
//! ```text
//! y'_i = (1/phi'_i) sum_j a_ij phi_j y_j + (grad f_i(x'_i) - grad f_i(x_i)) / phi'_i
//! ```

pub mod bound;
pub mod direct;
pub mod lyapunov;
pub mod step;

use std::io::Write;

use nalgebra::DVector;
use thiserror::Error;

use crate::consensus::{
    consensus_error, mix, propagate_phi, tracking_disagreement, uniform_average, ConsensusError,
    ConsensusState,
};
use crate::graph::{
    build_metropolis_weights, build_push_sum_weights, DigraphSnapshot, GraphError, GraphSequence,
    WeightMatrix,
};
use crate::metrics::{MeritReport, MetricsError};
use crate::problems::ProblemInstance;
use crate::surrogates::{solve_subproblem, SurrogateError, SurrogateKind, SurrogateSpec};

pub use bound::{constant_step_bound, ln_bound_branches, ln_constant_step_bound, StepBoundParams};
pub use lyapunov::{
    BlockEnergies, DescentViolation, LyapunovConstants, LyapunovSample, LyapunovTracker,
};
pub use step::{StepRule, StepSizeSchedule, StepSizer};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SonataError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Order of the local step and the consensus step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mixing {
    /// Adapt then combine.
    Atc,
    /// Combine and adapt.
    Caa,
}

/// How `A^n` is built from each snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightBuilder {
    /// Column stochastic `1 / d_j`, any digraph.
    PushSum,
    /// Doubly stochastic, undirected snapshots only.
    Metropolis,
}

impl WeightBuilder {
    pub fn build(&self, g: &DigraphSnapshot) -> Result<WeightMatrix, GraphError> {
        match self {
            WeightBuilder::PushSum => Ok(build_push_sum_weights(g)),
            WeightBuilder::Metropolis => build_metropolis_weights(g),
        }
    }
}

/// Named special cases; all use the linearized model with `tau_i = I`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    SonataL,
    NextL,
    AugDgm,
    DiGing,
    PushDiGing,
    AddOpt,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::SonataL,
        Preset::NextL,
        Preset::AugDgm,
        Preset::DiGing,
        Preset::PushDiGing,
        Preset::AddOpt,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::SonataL => "sonata-l",
            Preset::NextL => "next-l",
            Preset::AugDgm => "aug-dgm",
            Preset::DiGing => "diging",
            Preset::PushDiGing => "push-diging",
            Preset::AddOpt => "add-opt",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }

    /// `(mixing, weights)` fixed by the preset.
    pub fn layout(&self) -> (Mixing, WeightBuilder) {
        match self {
            Preset::SonataL | Preset::PushDiGing => (Mixing::Atc, WeightBuilder::PushSum),
            Preset::NextL | Preset::AugDgm => (Mixing::Atc, WeightBuilder::Metropolis),
            Preset::DiGing => (Mixing::Caa, WeightBuilder::Metropolis),
            Preset::AddOpt => (Mixing::Caa, WeightBuilder::PushSum),
        }
    }
}

/// Everything that defines one algorithm run apart from data and graph.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmConfig {
    pub surrogate: SurrogateSpec,
    pub schedule: StepSizeSchedule,
    pub mixing: Mixing,
    pub weights: WeightBuilder,
    pub preset: Option<Preset>,
    /// Stop once `M <= early_stop`; zero runs the full horizon.
    pub early_stop: f64,
}

impl AlgorithmConfig {
    /// ATC mixing with push-sum weights.
    pub fn new(surrogate: SurrogateSpec, schedule: StepSizeSchedule) -> Self {
        Self {
            surrogate,
            schedule,
            mixing: Mixing::Atc,
            weights: WeightBuilder::PushSum,
            preset: None,
            early_stop: 0.0,
        }
    }

    pub fn validate(&self, problem: &ProblemInstance, seq: &GraphSequence) -> Result<(), SonataError> {
        let num = problem.num_agents();
        if seq.num_agents != num {
            return Err(SonataError::Config(format!(
                "graph has {} agents, problem has {num}",
                seq.num_agents
            )));
        }
        self.surrogate.validate(problem)?;
        self.schedule.validate(num)?;
        if self.mixing == Mixing::Caa && !problem.constraint.is_full_space() {
            return Err(SonataError::Config(
                "CAA mixing is only supported without constraints".into(),
            ));
        }
        if self.weights == WeightBuilder::Metropolis && !seq.is_undirected() {
            return Err(SonataError::Config(
                "Metropolis weights need an undirected graph model".into(),
            ));
        }
        if !(self.early_stop >= 0.0) {
            return Err(SonataError::Config("early-stop tolerance must be nonnegative".into()));
        }
        if let Some(p) = self.preset {
            let (mixing, weights) = p.layout();
            let linear = self.surrogate.kind == SurrogateKind::Linearization
                && (0..num).all(|i| self.surrogate.tau_for(i) == num as f64);
            if !linear || mixing != self.mixing || weights != self.weights {
                return Err(SonataError::Config(format!(
                    "settings do not match preset {}",
                    p.name()
                )));
            }
        }
        Ok(())
    }
}

/// Configuration of a named special case.
pub fn apply_preset(preset: Preset, num_agents: usize, schedule: StepSizeSchedule) -> AlgorithmConfig {
    let (mixing, weights) = preset.layout();
    AlgorithmConfig {
        surrogate: SurrogateSpec::new(SurrogateKind::Linearization, num_agents as f64),
        schedule,
        mixing,
        weights,
        preset: Some(preset),
        early_stop: 0.0,
    }
}

/// `x^0` given, `y^0 = grad f_i(x^0_i)`, `phi^0 = 1`.
pub fn initial_state(problem: &ProblemInstance, x0: Vec<DVector<f64>>) -> Result<ConsensusState, SonataError> {
    if x0.len() != problem.num_agents() || x0.iter().any(|v| v.len() != problem.dim()) {
        return Err(SonataError::Config("initial point does not match the problem".into()));
    }
    if x0.iter().any(|v| !problem.constraint.contains(v, 1e-12)) {
        return Err(SonataError::Config("initial point lies outside the feasible set".into()));
    }
    let y0 = problem.costs.iter().zip(&x0).map(|(c, x)| c.grad(x)).collect();
    Ok(ConsensusState::new(x0, y0))
}

/// Result of one iteration, with the local solutions that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub state: ConsensusState,
    pub x_tilde: Vec<DVector<f64>>,
}

/// One SONATA iteration with per-agent steps `alphas`.
pub fn sonata_step(
    state: &ConsensusState,
    config: &AlgorithmConfig,
    problem: &ProblemInstance,
    a: &WeightMatrix,
    alphas: &[f64],
) -> Result<StepOutput, SonataError> {
    let num = state.num_agents();
    if a.num_agents() != num || alphas.len() != num || problem.num_agents() != num {
        return Err(ConsensusError::Dimension(format!(
            "state has {num} agents, weights {}, steps {}, problem {}",
            a.num_agents(),
            alphas.len(),
            problem.num_agents()
        ))
        .into());
    }
    let x_tilde = (0..num)
        .map(|i| solve_subproblem(&config.surrogate, problem, i, &state.x[i], &state.y[i]))
        .collect::<Result<Vec<_>, _>>()?;
    let phi_new = propagate_phi(a, &state.phi);
    let x_new = match config.mixing {
        Mixing::Atc => {
            let half: Vec<DVector<f64>> = (0..num)
                .map(|i| &state.x[i] + (&x_tilde[i] - &state.x[i]) * alphas[i])
                .collect();
            mix(a, &state.phi, &phi_new, &half)
        }
        Mixing::Caa => {
            let mut m = mix(a, &state.phi, &phi_new, &state.x);
            for i in 0..num {
                let w = alphas[i] * state.phi[i] / phi_new[i];
                m[i].axpy(w, &(&x_tilde[i] - &state.x[i]), 1.0);
            }
            m
        }
    };
    let mut y_new = mix(a, &state.phi, &phi_new, &state.y);
    for i in 0..num {
        let c = &problem.costs[i];
        let dg = c.grad(&x_new[i]) - c.grad(&state.x[i]);
        y_new[i].axpy(1.0 / phi_new[i], &dg, 1.0);
    }
    Ok(StepOutput {
        state: ConsensusState {
            x: x_new,
            y: y_new,
            phi: phi_new,
        },
        x_tilde,
    })
}

/// [`sonata_step`] without the local solutions.
pub fn sonata_iteration(
    state: &ConsensusState,
    config: &AlgorithmConfig,
    problem: &ProblemInstance,
    a: &WeightMatrix,
    alphas: &[f64],
) -> Result<ConsensusState, SonataError> {
    sonata_step(state, config, problem, a, alphas).map(|o| o.state)
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    /// Cumulative directed-link transmissions, self-loops excluded.
    pub msg_exchanges: u64,
    /// Step used at this iteration (agent 0).
    pub alpha: f64,
    pub j: f64,
    pub j_inf: f64,
    pub d: f64,
    pub d_inf: f64,
    pub m: f64,
    pub nmse: Option<f64>,
    /// Deviation of the copies from their `phi`-weighted average.
    pub consensus_err: f64,
    /// Same for the trackers; NaN for methods without trackers.
    pub tracking_err: f64,
    /// `U` at the uniform average.
    pub u_mean: f64,
}

impl TraceRecord {
    pub const CSV_HEADER: [&'static str; 12] = [
        "iter",
        "msg_exchanges",
        "alpha",
        "J",
        "J_inf",
        "D",
        "D_inf",
        "M",
        "NMSE",
        "consensus_err",
        "tracking_err",
        "U_mean",
    ];

    pub fn from_state(
        problem: &ProblemInstance,
        state: &ConsensusState,
        iter: usize,
        msg_exchanges: u64,
        alpha: f64,
        with_tracker: bool,
    ) -> Result<Self, SonataError> {
        let r = MeritReport::compute(problem, &state.x)?;
        Ok(Self {
            iter,
            msg_exchanges,
            alpha,
            j: r.j,
            j_inf: r.j_inf,
            d: r.d,
            d_inf: r.d_inf,
            m: r.m,
            nmse: r.nmse,
            consensus_err: consensus_error(state),
            tracking_err: if with_tracker {
                tracking_disagreement(state)
            } else {
                f64::NAN
            },
            u_mean: problem.objective(&uniform_average(&state.x)),
        })
    }

    /// Fields in header order, shortest round-trip decimal; a missing NMSE
    /// is written as `NaN`.
    pub fn csv_fields(&self) -> [String; 12] {
        let f = |v: f64| format!("{v:?}");
        [
            self.iter.to_string(),
            self.msg_exchanges.to_string(),
            f(self.alpha),
            f(self.j),
            f(self.j_inf),
            f(self.d),
            f(self.d_inf),
            f(self.m),
            f(self.nmse.unwrap_or(f64::NAN)),
            f(self.consensus_err),
            f(self.tracking_err),
            f(self.u_mean),
        ]
    }
}

/// Writes records with the fixed header.
pub fn write_trace_csv<W: Write>(out: W, records: &[TraceRecord]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TraceRecord::CSV_HEADER)?;
    for r in records {
        w.write_record(r.csv_fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Horizon, seed and logging of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub n_iters: usize,
    /// Seed of the initial point when `x0` is not given.
    pub seed: u64,
    /// Record every `log_every` iterations plus the last one.
    pub log_every: usize,
    pub x0: Option<Vec<DVector<f64>>>,
}

impl RunOptions {
    pub fn new(n_iters: usize, seed: u64) -> Self {
        Self {
            n_iters,
            seed,
            log_every: 1,
            x0: None,
        }
    }
}

/// What an observer sees after iteration `n`.
pub struct IterationView<'a> {
    pub n: usize,
    /// State `n`.
    pub state: &'a ConsensusState,
    /// Local solutions at `n`; empty for methods without subproblems.
    pub x_tilde: &'a [DVector<f64>],
    pub weights: &'a WeightMatrix,
    pub alphas: &'a [f64],
    /// State `n + 1`.
    pub next: &'a ConsensusState,
}

/// Shared loop settings: one `step` per slot, records, message counting,
/// early stop.
pub(crate) struct Driver<'a> {
    pub problem: &'a ProblemInstance,
    pub seq: &'a GraphSequence,
    pub opts: &'a RunOptions,
    pub weights: WeightBuilder,
    pub schedule: &'a StepSizeSchedule,
    pub early_stop: f64,
    pub with_tracker: bool,
}

impl Driver<'_> {
    pub fn drive(
        &self,
        mut state: ConsensusState,
        step: &mut dyn FnMut(&ConsensusState, &WeightMatrix, &[f64]) -> Result<StepOutput, SonataError>,
        observer: &mut dyn FnMut(&IterationView),
    ) -> Result<Vec<TraceRecord>, SonataError> {
        let (problem, opts) = (self.problem, self.opts);
        if opts.log_every == 0 {
            return Err(SonataError::Config("log stride must be positive".into()));
        }
        let early_stop = self.early_stop;
        let mut sizer = self.schedule.sizer(problem.num_agents());
        let mut msgs: u64 = 0;
        let mut records = Vec::new();
        for n in 0..=opts.n_iters {
            let logged = n % opts.log_every == 0 || n == opts.n_iters;
            if logged || early_stop > 0.0 {
                let rec = TraceRecord::from_state(
                    problem,
                    &state,
                    n,
                    msgs,
                    sizer.current()[0],
                    self.with_tracker,
                )?;
                let stop = early_stop > 0.0 && rec.m <= early_stop;
                if logged || stop {
                    records.push(rec);
                }
                if stop {
                    break;
                }
            }
            if n == opts.n_iters {
                break;
            }
            let g = self.seq.snapshot(n)?;
            let a = self.weights.build(&g)?;
            let out = step(&state, &a, sizer.current())?;
            observer(&IterationView {
                n,
                state: &state,
                x_tilde: &out.x_tilde,
                weights: &a,
                alphas: sizer.current(),
                next: &out.state,
            });
            msgs += g.message_count() as u64;
            state = out.state;
            sizer.advance();
        }
        Ok(records)
    }
}

/// Runs SONATA and calls `observer` after every iteration.
pub fn run_with_observer(
    problem: &ProblemInstance,
    config: &AlgorithmConfig,
    seq: &GraphSequence,
    opts: &RunOptions,
    observer: &mut dyn FnMut(&IterationView),
) -> Result<Vec<TraceRecord>, SonataError> {
    config.validate(problem, seq)?;
    let x0 = opts.x0.clone().unwrap_or_else(|| problem.initial_point(opts.seed));
    let state = initial_state(problem, x0)?;
    let mut step = |s: &ConsensusState, a: &WeightMatrix, alphas: &[f64]| {
        sonata_step(s, config, problem, a, alphas)
    };
    let driver = Driver {
        problem,
        seq,
        opts,
        weights: config.weights,
        schedule: &config.schedule,
        early_stop: config.early_stop,
        with_tracker: true,
    };
    driver.drive(state, &mut step, observer)
}

/// Runs SONATA for `n_iters` iterations, recording every one.
pub fn run(
    problem: &ProblemInstance,
    config: &AlgorithmConfig,
    seq: &GraphSequence,
    n_iters: usize,
    seed: u64,
) -> Result<Vec<TraceRecord>, SonataError> {
    run_with_observer(problem, config, seq, &RunOptions::new(n_iters, seed), &mut |_| {})
}
