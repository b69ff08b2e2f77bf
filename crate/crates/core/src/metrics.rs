//! Stationarity, consensus and accuracy measures.
//!
//! With `xbar` the uniform average of the agents' copies:
//!
//! ```text
//! J(xbar) = || xbar - argmin_{z in K} (grad F(xbar) - grad G_minus(xbar))^T (z - xbar)
//!                                     + (1/2) ||z - xbar||^2 + G_plus(z) ||
//! D(x)    = || x - 1 (x) xbar ||
//! M       = max(J^2, D^2)
//! ```

use nalgebra::DVector;
use thiserror::Error;

use crate::consensus::{stacked_sq_deviation, uniform_average};
use crate::problems::ProblemInstance;
use crate::surrogates::{solve_subproblem, SurrogateError, SurrogateSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("ground truth is the zero vector")]
    ZeroTruth,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// The proximal-gradient point whose distance from `xbar` is `J`.
///
/// The prox of `G_plus` over `K` is exact for every supported set, so the
/// inner argmin needs no iterative solve.
pub fn stationarity_target(problem: &ProblemInstance, xbar: &DVector<f64>) -> DVector<f64> {
    let step = problem.smooth_grad(xbar) - problem.reg.grad_gminus(xbar);
    problem
        .constraint
        .prox_l1(&(xbar - step), problem.reg.l1_weight())
}

/// `J(xbar)`, Euclidean.
pub fn merit_j(problem: &ProblemInstance, xbar: &DVector<f64>) -> f64 {
    (xbar - stationarity_target(problem, xbar)).norm()
}

/// `J(xbar)` in the infinity norm.
pub fn merit_j_inf(problem: &ProblemInstance, xbar: &DVector<f64>) -> f64 {
    (xbar - stationarity_target(problem, xbar)).amax()
}

/// `(D, D_inf)`: Euclidean and infinity-norm deviation of the stacked
/// copies from their uniform average.
pub fn merit_d(x: &[DVector<f64>]) -> (f64, f64) {
    let xbar = uniform_average(x);
    let d = stacked_sq_deviation(x, &xbar).sqrt();
    let d_inf = x.iter().map(|xi| (xi - &xbar).amax()).fold(0.0, f64::max);
    (d, d_inf)
}

/// `||x - 1 (x) x*||^2 / (I ||x*||^2)`, minimized over the sign of `x*`
/// when `up_to_sign`.
pub fn nmse(x: &[DVector<f64>], truth: &DVector<f64>, up_to_sign: bool) -> Result<f64, MetricsError> {
    let t2 = truth.norm_squared();
    if t2 == 0.0 {
        return Err(MetricsError::ZeroTruth);
    }
    if x.iter().any(|v| v.len() != truth.len()) {
        return Err(MetricsError::Dimension("iterate and truth differ in length".into()));
    }
    let denom = x.len() as f64 * t2;
    let plus = stacked_sq_deviation(x, truth) / denom;
    if !up_to_sign {
        return Ok(plus);
    }
    let minus = stacked_sq_deviation(x, &-truth) / denom;
    Ok(plus.min(minus))
}

/// All merit values at one iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeritReport {
    pub j: f64,
    pub j_inf: f64,
    pub d: f64,
    pub d_inf: f64,
    pub m: f64,
    pub nmse: Option<f64>,
}

impl MeritReport {
    pub fn compute(problem: &ProblemInstance, x: &[DVector<f64>]) -> Result<Self, MetricsError> {
        let xbar = uniform_average(x);
        let r = &xbar - stationarity_target(problem, &xbar);
        let (j, j_inf) = (r.norm(), r.amax());
        let (d, d_inf) = merit_d(x);
        let nmse = match &problem.ground_truth {
            Some(t) => Some(nmse(x, t, problem.truth_up_to_sign)?),
            None => None,
        };
        Ok(Self {
            j,
            j_inf,
            d,
            d_inf,
            m: (j * j).max(d * d),
            nmse,
        })
    }
}

/// Error-free best response `x^_i(z)`: agent `i`'s subproblem at `z` with
/// the exact network gradient in place of the tracker.
pub fn best_response_oracle(
    problem: &ProblemInstance,
    spec: &SurrogateSpec,
    i: usize,
    z: &DVector<f64>,
) -> Result<DVector<f64>, SurrogateError> {
    let y = problem.smooth_grad(z) / problem.num_agents() as f64;
    solve_subproblem(spec, problem, i, z, &y)
}

/// Right-hand side of the best-response consistency bound
/// `(I / tau_i) ||e_y|| + (2 I L / tau_i) ||e_x||`.
pub fn best_response_gap_bound(
    problem: &ProblemInstance,
    tau_i: f64,
    consensus_err: f64,
    tracking_err: f64,
) -> f64 {
    let num = problem.num_agents() as f64;
    num / tau_i * tracking_err + 2.0 * num * problem.lipschitz_sum() / tau_i * consensus_err
}
