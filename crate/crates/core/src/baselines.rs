//! Comparison methods without gradient tracking.
//!
//! Subgradient-push mixes the `phi`-scaled copies, de-biases, and steps
//! along a subgradient of `f_i + G / I` taken at the de-biased point. It is
//! a reconstruction of the standard method; with `u_i = phi_i x_i` the
//! update reads
//!
//! ```text
//! phi' = A phi,  z_i = (1/phi'_i) sum_j a_ij u_j,  u'_i = phi'_i z_i - alpha s_i(z_i)
//! ```
//!
//! and the state keeps `x'_i = u'_i / phi'_i`. Gradient projection mixes
//! the copies and takes a projected gradient step on `f_i` alone.

use nalgebra::DVector;

use crate::consensus::{mix, propagate_phi, ConsensusError, ConsensusState};
use crate::graph::{GraphSequence, WeightMatrix};
use crate::problems::ProblemInstance;
use crate::sonata::{
    Driver, IterationView, RunOptions, SonataError, StepOutput, StepSizeSchedule, TraceRecord,
    WeightBuilder,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    SubgradientPush,
    GradientProjection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub schedule: StepSizeSchedule,
    pub weights: WeightBuilder,
}

impl BaselineConfig {
    /// Push-sum weights.
    pub fn new(kind: BaselineKind, schedule: StepSizeSchedule) -> Self {
        Self {
            kind,
            schedule,
            weights: WeightBuilder::PushSum,
        }
    }

    pub fn validate(&self, problem: &ProblemInstance, seq: &GraphSequence) -> Result<(), SonataError> {
        if seq.num_agents != problem.num_agents() {
            return Err(SonataError::Config(format!(
                "graph has {} agents, problem has {}",
                seq.num_agents,
                problem.num_agents()
            )));
        }
        self.schedule.validate(problem.num_agents())?;
        if !self.schedule.is_diminishing() {
            return Err(SonataError::Config("baselines need a diminishing step".into()));
        }
        if self.weights == WeightBuilder::Metropolis && !seq.is_undirected() {
            return Err(SonataError::Config(
                "Metropolis weights need an undirected graph model".into(),
            ));
        }
        match self.kind {
            BaselineKind::SubgradientPush if !problem.constraint.is_full_space() => Err(
                SonataError::Config("subgradient-push does not handle constraints".into()),
            ),
            BaselineKind::GradientProjection if !problem.reg.is_zero() => Err(SonataError::Config(
                "gradient projection needs a smooth objective".into(),
            )),
            _ => Ok(()),
        }
    }
}

fn check(state: &ConsensusState, a: &WeightMatrix, alphas: &[f64]) -> Result<(), SonataError> {
    let num = state.num_agents();
    if a.num_agents() != num || alphas.len() != num {
        return Err(ConsensusError::Dimension(format!(
            "state has {num} agents, weights {}, steps {}",
            a.num_agents(),
            alphas.len()
        ))
        .into());
    }
    Ok(())
}

/// One subgradient-push step.
pub fn subgradient_push_step(
    state: &ConsensusState,
    a: &WeightMatrix,
    problem: &ProblemInstance,
    alphas: &[f64],
) -> Result<ConsensusState, SonataError> {
    check(state, a, alphas)?;
    let num = state.num_agents() as f64;
    let phi_new = propagate_phi(a, &state.phi);
    let mut x = mix(a, &state.phi, &phi_new, &state.x);
    for (i, xi) in x.iter_mut().enumerate() {
        let s = problem.costs[i].grad(xi) + problem.reg.subgradient(xi) / num;
        xi.axpy(-alphas[i] / phi_new[i], &s, 1.0);
    }
    Ok(ConsensusState {
        x,
        y: state.y.clone(),
        phi: phi_new,
    })
}

/// One gradient-projection step.
pub fn gradient_projection_step(
    state: &ConsensusState,
    a: &WeightMatrix,
    problem: &ProblemInstance,
    alphas: &[f64],
) -> Result<ConsensusState, SonataError> {
    check(state, a, alphas)?;
    let phi_new = propagate_phi(a, &state.phi);
    let x = mix(a, &state.phi, &phi_new, &state.x)
        .into_iter()
        .enumerate()
        .map(|(i, m)| {
            let g = problem.costs[i].grad(&m);
            problem.constraint.project(&(m - g * alphas[i]))
        })
        .collect();
    Ok(ConsensusState {
        x,
        y: state.y.clone(),
        phi: phi_new,
    })
}

/// Runs a baseline; records carry NaN tracking errors.
pub fn run_baseline_with_observer(
    problem: &ProblemInstance,
    config: &BaselineConfig,
    seq: &GraphSequence,
    opts: &RunOptions,
    observer: &mut dyn FnMut(&IterationView),
) -> Result<Vec<TraceRecord>, SonataError> {
    config.validate(problem, seq)?;
    let x0 = opts.x0.clone().unwrap_or_else(|| problem.initial_point(opts.seed));
    if x0.len() != problem.num_agents() || x0.iter().any(|v| v.len() != problem.dim()) {
        return Err(SonataError::Config("initial point does not match the problem".into()));
    }
    let y0 = vec![DVector::zeros(problem.dim()); problem.num_agents()];
    let state = ConsensusState::new(x0, y0);
    let kind = config.kind;
    let mut step = |s: &ConsensusState, a: &WeightMatrix, alphas: &[f64]| {
        let next = match kind {
            BaselineKind::SubgradientPush => subgradient_push_step(s, a, problem, alphas),
            BaselineKind::GradientProjection => gradient_projection_step(s, a, problem, alphas),
        }?;
        Ok(StepOutput {
            state: next,
            x_tilde: Vec::new(),
        })
    };
    let driver = Driver {
        problem,
        seq,
        opts,
        weights: config.weights,
        schedule: &config.schedule,
        early_stop: 0.0,
        with_tracker: false,
    };
    driver.drive(state, &mut step, observer)
}

pub fn run_baseline(
    problem: &ProblemInstance,
    config: &BaselineConfig,
    seq: &GraphSequence,
    opts: &RunOptions,
) -> Result<Vec<TraceRecord>, SonataError> {
    run_baseline_with_observer(problem, config, seq, opts, &mut |_| {})
}
