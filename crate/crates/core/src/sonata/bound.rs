//! The explicit constant step-size bound.
//!
//! ```text
//! alpha <= min { (1 - rho) sigma / (sqrt(2) c B),
//!                (2 c_tau phi_lb / (I phi_ub)) / ( (L + L_G)/I
//!                   + 2 c_L B c / (1 - rho) sqrt(2 / (1 - sigma^2))
//!                   + 12 L_mx B^2 c^2 / (phi_lb (1 - rho)^2) sqrt(1 / (1 - sigma^2)) ) }
//! ```
//!
//! with `B = b_bar` and `rho = rho_bbar` from [`NetworkConstants`]. For
//! column-stochastic weights the bound is astronomically small, so it is
//! evaluated in the log domain.

use crate::consensus::NetworkConstants;
use crate::problems::ProblemInstance;
use crate::surrogates::{expansion_lipschitz, SurrogateSpec};

use super::SonataError;

/// Problem and network quantities entering the bound.
#[derive(Debug, Clone, PartialEq)]
pub struct StepBoundParams {
    /// `L = sum_i L_i`.
    pub lipschitz_sum: f64,
    /// `L_mx = max_i L_i`.
    pub lipschitz_max: f64,
    /// `max_i L~_i + L_G`.
    pub surrogate_lipschitz_max: f64,
    /// `min_i tau_i`.
    pub c_tau: f64,
    /// Lipschitz constant of `grad G_minus`.
    pub l_g: f64,
    pub sigma: f64,
    pub network: NetworkConstants,
}

impl StepBoundParams {
    pub fn from_problem(
        problem: &ProblemInstance,
        spec: &SurrogateSpec,
        network: NetworkConstants,
        sigma: f64,
    ) -> Result<Self, SonataError> {
        let num = problem.num_agents();
        let l_g = problem.reg.lipschitz_grad_gminus();
        let tilde = (0..num)
            .map(|i| expansion_lipschitz(spec, problem, i))
            .fold(0.0, f64::max);
        let p = Self {
            lipschitz_sum: problem.lipschitz_sum(),
            lipschitz_max: problem.lipschitz_max(),
            surrogate_lipschitz_max: tilde + l_g,
            c_tau: spec.min_tau(num),
            l_g,
            sigma,
            network,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SonataError> {
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(SonataError::Config(format!(
                "sigma must lie in (0, 1), got {}",
                self.sigma
            )));
        }
        if !(self.c_tau > 0.0) {
            return Err(SonataError::Config("c_tau must be positive".into()));
        }
        let nonneg = [
            self.lipschitz_sum,
            self.lipschitz_max,
            self.surrogate_lipschitz_max,
            self.l_g,
        ];
        if nonneg.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(SonataError::Config(
                "Lipschitz constants must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// `c_L = (L sqrt(I) + L_mx + L~_mx) / I`.
    pub fn c_l(&self) -> f64 {
        let num = self.network.num_agents as f64;
        (self.lipschitz_sum * num.sqrt() + self.lipschitz_max + self.surrogate_lipschitz_max) / num
    }

    /// `ln phi_lb`, exact even when `phi_lb` underflows.
    pub fn ln_phi_lb(&self) -> f64 {
        let k = &self.network;
        if k.doubly_stochastic {
            0.0
        } else {
            2.0 * ((k.num_agents - 1) * k.window) as f64 * k.kappa.ln()
        }
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Natural logs of the two branches.
pub fn ln_bound_branches(p: &StepBoundParams) -> (f64, f64) {
    let k = &p.network;
    let num = k.num_agents as f64;
    let ln_c = k.c.ln();
    let ln_gap = k.ln_gap_bbar;
    let ln_b = k.ln_b_bar;
    let ln_phi_lb = p.ln_phi_lb();
    let s2 = 1.0 - p.sigma * p.sigma;

    let first = ln_gap + p.sigma.ln() - 0.5 * std::f64::consts::LN_2 - ln_c - ln_b;

    let t1 = ((p.lipschitz_sum + p.l_g) / num).ln();
    let t2 = std::f64::consts::LN_2 + p.c_l().ln() + ln_b + ln_c - ln_gap + 0.5 * (2.0 / s2).ln();
    let t3 = 12f64.ln() + p.lipschitz_max.ln() - ln_phi_lb + 2.0 * ln_b + 2.0 * ln_c - 2.0 * ln_gap
        + 0.5 * (1.0 / s2).ln();
    let ln_phi_ub = k.phi_ub.ln();
    let second = std::f64::consts::LN_2 + p.c_tau.ln() + ln_phi_lb - num.ln() - ln_phi_ub
        - log_sum_exp(&[t1, t2, t3]);
    (first, second)
}

/// Natural log of the bound.
pub fn ln_constant_step_bound(p: &StepBoundParams) -> f64 {
    let (a, b) = ln_bound_branches(p);
    a.min(b)
}

/// The bound itself; underflows to zero for column-stochastic networks of
/// realistic size.
pub fn constant_step_bound(p: &StepBoundParams) -> f64 {
    ln_constant_step_bound(p).exp()
}
