//! Strongly convex local models and the per-agent subproblem
//!
//! ```text
//! x~_i = argmin_{z in K}  f~_i(z; x_i) + (I y_i - grad f_i(x_i) - grad G_minus(x_i))^T (z - x_i) + G_plus(z)
//! ```
//!
//! Linearized models are solved in closed form; the rest go through a
//! relaxed proximal-gradient loop with a diminishing relaxation step.

use nalgebra::DVector;
use thiserror::Error;

use crate::problems::{ConstraintSet, ProblemInstance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurrogateError {
    #[error("inner solver stopped after {iterations} iterations with residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid surrogate: {0}")]
    Invalid(String),
}

/// Which convex model `f~_i(.; x)` replaces `f_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateKind {
    /// `f_i(x) + grad f_i(x)^T (z - x) + (tau/2) ||z - x||^2`.
    Linearization,
    /// Keep the convex part of `f_i`, linearize the rest, add the proximal term.
    PartialLinearization,
    /// Keep `f_i(z_1, x_2)` on the first `split` coordinates, where it must be
    /// convex, linearize in the remaining block, add the proximal term on
    /// both blocks.
    PartialConvexification { split: usize },
}

/// Settings of the inner proximal-gradient solver.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolverParams {
    /// Stop once the unit-step prox residual in the infinity norm is below this.
    pub tolerance: f64,
    pub max_iters: usize,
    /// Initial relaxation step.
    pub gamma0: f64,
    /// Decay of the relaxation step, `gamma <- gamma (1 - mu gamma)`.
    pub mu: f64,
    /// Floor on the proximal weight; raised to the smooth Lipschitz constant
    /// when that is larger.
    pub prox_weight: f64,
}

impl Default for InnerSolverParams {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iters: 100_000,
            gamma0: 0.5,
            mu: 0.01,
            prox_weight: 2.0,
        }
    }
}

/// Choice and parameters of the local model.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateSpec {
    pub kind: SurrogateKind,
    /// Proximal weight shared by all agents unless overridden.
    pub tau: f64,
    pub tau_per_agent: Option<Vec<f64>>,
    pub inner: InnerSolverParams,
}

impl SurrogateSpec {
    pub fn new(kind: SurrogateKind, tau: f64) -> Self {
        Self {
            kind,
            tau,
            tau_per_agent: None,
            inner: InnerSolverParams::default(),
        }
    }

    pub fn tau_for(&self, i: usize) -> f64 {
        self.tau_per_agent.as_ref().map_or(self.tau, |t| t[i])
    }

    /// `c_tau = min_i tau_i`.
    pub fn min_tau(&self, num_agents: usize) -> f64 {
        (0..num_agents).map(|i| self.tau_for(i)).fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self, problem: &ProblemInstance) -> Result<(), SurrogateError> {
        let num = problem.num_agents();
        if let Some(t) = &self.tau_per_agent {
            if t.len() != num {
                return Err(SurrogateError::Invalid(format!(
                    "{} per-agent tau values for {num} agents",
                    t.len()
                )));
            }
        }
        if (0..num).any(|i| !(self.tau_for(i) > 0.0)) {
            return Err(SurrogateError::Invalid("tau must be positive".into()));
        }
        if !(self.inner.tolerance > 0.0) || self.inner.max_iters == 0 {
            return Err(SurrogateError::Invalid(
                "inner tolerance and iteration cap must be positive".into(),
            ));
        }
        if !(self.inner.gamma0 > 0.0 && self.inner.gamma0 <= 1.0)
            || !(self.inner.mu > 0.0 && self.inner.mu < 1.0)
            || !(self.inner.prox_weight > 0.0)
        {
            return Err(SurrogateError::Invalid(
                "inner step needs gamma0 in (0, 1], mu in (0, 1) and a positive proximal weight"
                    .into(),
            ));
        }
        if let SurrogateKind::PartialConvexification { split } = self.kind {
            if split > problem.dim() {
                return Err(SurrogateError::Invalid(format!(
                    "split {split} exceeds dimension {}",
                    problem.dim()
                )));
            }
            if split > 0 && problem.costs.iter().any(|c| !c.is_convex()) {
                return Err(SurrogateError::Invalid(
                    "partial convexification needs costs convex in the kept block".into(),
                ));
            }
        }
        Ok(())
    }

    /// True when the model of agent `i` is the plain linearization.
    fn is_linear_for(&self, problem: &ProblemInstance, i: usize) -> bool {
        match self.kind {
            SurrogateKind::Linearization => true,
            SurrogateKind::PartialLinearization => !problem.costs[i].is_convex(),
            SurrogateKind::PartialConvexification { split } => split == 0,
        }
    }
}

/// `f~_i(z; x)`.
pub fn surrogate_value(
    spec: &SurrogateSpec,
    problem: &ProblemInstance,
    i: usize,
    x: &DVector<f64>,
    z: &DVector<f64>,
) -> f64 {
    let cost = &problem.costs[i];
    let tau = spec.tau_for(i);
    let d = z - x;
    let prox = 0.5 * tau * d.norm_squared();
    if spec.is_linear_for(problem, i) {
        return cost.value(x) + cost.grad(x).dot(&d) + prox;
    }
    match spec.kind {
        SurrogateKind::PartialConvexification { split } => {
            let mut mixed = x.clone();
            mixed.rows_mut(0, split).copy_from(&z.rows(0, split));
            let g = cost.grad(x);
            let m = x.len();
            cost.value(&mixed) + g.rows(split, m - split).dot(&d.rows(split, m - split)) + prox
        }
        _ => cost.value(z) + prox,
    }
}

/// `grad_z f~_i(z; x)`.
pub fn surrogate_grad(
    spec: &SurrogateSpec,
    problem: &ProblemInstance,
    i: usize,
    x: &DVector<f64>,
    z: &DVector<f64>,
) -> DVector<f64> {
    let cost = &problem.costs[i];
    let tau = spec.tau_for(i);
    let prox = (z - x) * tau;
    if spec.is_linear_for(problem, i) {
        return cost.grad(x) + prox;
    }
    match spec.kind {
        SurrogateKind::PartialConvexification { split } => {
            let mut mixed = x.clone();
            mixed.rows_mut(0, split).copy_from(&z.rows(0, split));
            let mut g = cost.grad(x);
            let g1 = cost.grad(&mixed);
            g.rows_mut(0, split).copy_from(&g1.rows(0, split));
            g + prox
        }
        _ => cost.grad(z) + prox,
    }
}

/// Lipschitz constant of `grad_z f~_i`.
fn surrogate_lipschitz(spec: &SurrogateSpec, problem: &ProblemInstance, i: usize) -> f64 {
    let tau = spec.tau_for(i);
    if spec.is_linear_for(problem, i) {
        tau
    } else {
        tau + problem.costs[i].lipschitz()
    }
}

/// Lipschitz constant of `x -> grad_z f~_i(z; x)`, uniform in `z`.
pub fn expansion_lipschitz(spec: &SurrogateSpec, problem: &ProblemInstance, i: usize) -> f64 {
    let tau = spec.tau_for(i);
    let l = problem.costs[i].lipschitz();
    match spec.kind {
        SurrogateKind::PartialLinearization if !spec.is_linear_for(problem, i) => tau,
        _ => l + tau,
    }
}

/// Linear coefficient `I y_i - grad f_i(x_i) - grad G_minus(x_i)`.
fn linear_coefficient(
    problem: &ProblemInstance,
    i: usize,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> DVector<f64> {
    y * problem.num_agents() as f64 - problem.costs[i].grad(x) - problem.reg.grad_gminus(x)
}

/// Full subproblem objective at `z`.
pub fn subproblem_objective(
    spec: &SurrogateSpec,
    problem: &ProblemInstance,
    i: usize,
    x: &DVector<f64>,
    y: &DVector<f64>,
    z: &DVector<f64>,
) -> f64 {
    surrogate_value(spec, problem, i, x, z)
        + linear_coefficient(problem, i, x, y).dot(&(z - x))
        + problem.reg.gplus(z)
}

/// Closed-form solution when the model is a linearization, else `None`.
///
/// With `G = 0`, no constraint and `tau = I` this is `x - y`. Otherwise it
/// is the shrink-then-project step
/// `prox_{lambda eta / tau, K}(x - (I y - grad G_minus(x)) / tau)`.
pub fn closed_form(
    spec: &SurrogateSpec,
    problem: &ProblemInstance,
    i: usize,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Option<DVector<f64>> {
    if !spec.is_linear_for(problem, i) {
        return None;
    }
    let num = problem.num_agents() as f64;
    let tau = spec.tau_for(i);
    let reg = &problem.reg;
    if reg.is_zero() && problem.constraint.is_full_space() && tau == num {
        return Some(x - y);
    }
    let step = y * num - reg.grad_gminus(x);
    let v = x - step / tau;
    Some(problem.constraint.prox_l1(&v, reg.l1_weight() / tau))
}

/// Outcome of the inner proximal-gradient loop.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub z: DVector<f64>,
    /// Unit-step prox residual, infinity norm.
    pub residual: f64,
    pub iterations: usize,
}

impl InnerSolution {
    /// Bound on the Euclidean distance to the exact minimizer, valid for a
    /// `strong_convexity`-strongly convex objective whose smooth part has an
    /// `lipschitz`-Lipschitz gradient.
    pub fn error_bound(&self, strong_convexity: f64, lipschitz: f64) -> f64 {
        let r2 = self.residual * (self.z.len() as f64).sqrt();
        (1.0 + lipschitz) * r2 / strong_convexity
    }
}

/// Minimizes `s(z) + beta ||z||_1` over `K` where `s` is smooth and strongly
/// convex with gradient `smooth_grad` (Lipschitz constant `lipschitz`).
///
/// Each iteration takes a proximal step with weight
/// `w = max(prox_weight, lipschitz)` and relaxes toward it by `gamma`. The
/// stopping test is the unit-step prox residual
/// `|| z - prox_{beta, K}(z - grad s(z)) ||_inf <= tol max(1, ||z||_inf)`,
/// so that the tolerance stays above rounding when iterates are large.
/// Non-finite data is passed through unchanged, as a closed form would.
pub fn inner_proximal_solver(
    smooth_grad: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    lipschitz: f64,
    gplus_weight: f64,
    constraint: &ConstraintSet,
    z0: &DVector<f64>,
    params: &InnerSolverParams,
) -> Result<InnerSolution, SurrogateError> {
    let w = params.prox_weight.max(lipschitz);
    let mut z = constraint.project(z0);
    let mut gamma = params.gamma0;
    let mut residual = f64::INFINITY;
    for r in 0..=params.max_iters {
        let g = smooth_grad(&z);
        let unit = constraint.prox_l1(&(&z - &g), gplus_weight);
        residual = (&z - &unit).amax();
        if residual <= params.tolerance * z.amax().max(1.0) || (r == 0 && !residual.is_finite()) {
            return Ok(InnerSolution {
                z,
                residual,
                iterations: r,
            });
        }
        if r == params.max_iters {
            break;
        }
        let target = constraint.prox_l1(&(&z - g / w), gplus_weight / w);
        z.axpy(gamma, &(target - &z), 1.0);
        gamma *= 1.0 - params.mu * gamma;
    }
    Err(SurrogateError::NoConvergence {
        iterations: params.max_iters,
        residual,
    })
}

/// Solves the subproblem with the inner solver regardless of closed forms,
/// warm-started at `x`.
pub fn solve_subproblem_generic(
    spec: &SurrogateSpec,
    problem: &ProblemInstance,
    i: usize,
    x: &DVector<f64>,
    y: &DVector<f64>,
    params: &InnerSolverParams,
) -> Result<InnerSolution, SurrogateError> {
    let lin = linear_coefficient(problem, i, x, y);
    let grad = |z: &DVector<f64>| surrogate_grad(spec, problem, i, x, z) + &lin;
    inner_proximal_solver(
        &grad,
        surrogate_lipschitz(spec, problem, i),
        problem.reg.l1_weight(),
        &problem.constraint,
        x,
        params,
    )
}

/// Error bound constants `(strong convexity, smooth Lipschitz)` of agent
/// `i`'s subproblem.
pub fn subproblem_conditioning(
    spec: &SurrogateSpec,
    problem: &ProblemInstance,
    i: usize,
) -> (f64, f64) {
    (spec.tau_for(i), surrogate_lipschitz(spec, problem, i))
}

/// The minimizer `x~_i`, in closed form when available.
pub fn solve_subproblem(
    spec: &SurrogateSpec,
    problem: &ProblemInstance,
    i: usize,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<DVector<f64>, SurrogateError> {
    match closed_form(spec, problem, i, x, y) {
        Some(z) => Ok(z),
        None => solve_subproblem_generic(spec, problem, i, x, y, &spec.inner).map(|s| s.z),
    }
}
