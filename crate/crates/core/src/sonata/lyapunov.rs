//! Block energies and the Lyapunov-like function used as a runtime
//! diagnostic.
//!
//! With `B = b_bar`, `rho = rho_bbar`, `eps = (1 - rho)/(rho B)`,
//! `rho~ = rho^2 (1 + B eps)` and block weights
//! `w_k = (k + 1 + (B - k - 1) rho~) / (1 - rho~)`:
//!
//! ```text
//! V^n = sum_{k<B} U(xbar_phi^{n+k})
//!     + (phi_ub / 2) eps_y^-1 sum_{k<B} w_k ||e_y^{n+k}||^2
//!     + (phi_ub / (2 mu_min)) (c_L eps_x^-1 + eps_y^-1 c_perp (2 + alpha_mx)^2)
//!         sum_{k<B} w_k ||e_x^{n+k}||^2
//! ```
//!
//! These need global constants no agent has, so they live outside the
//! distributed state and are fed from an observer.

use nalgebra::DVector;

use crate::consensus::{stacked_sq_deviation, weighted_average, ConsensusState};
use crate::problems::ProblemInstance;

use super::bound::StepBoundParams;
use super::SonataError;

/// Constants of the diagnostic, all at their optimizing choices.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovConstants {
    pub b_bar: usize,
    pub eps: f64,
    pub rho_tilde: f64,
    pub c_delta: f64,
    pub c_perp: f64,
    pub mu_min: f64,
    pub alpha_mx: f64,
    pub eps_x: f64,
    pub eps_y: f64,
    pub phi_ub: f64,
    pub c_l: f64,
    /// Coefficient of the weighted tracking block.
    pub coef_y: f64,
    /// Coefficient of the weighted consensus block.
    pub coef_x: f64,
    /// `w_k`, `k = 0..B`.
    pub weights: Vec<f64>,
}

impl LyapunovConstants {
    pub fn new(p: &StepBoundParams) -> Result<Self, SonataError> {
        p.validate()?;
        let k = &p.network;
        if !k.b_bar.is_finite() || k.b_bar > 1e7 {
            return Err(SonataError::Config(format!(
                "b_bar = {} is too large for a block diagnostic",
                k.b_bar
            )));
        }
        let b_bar = k.b_bar as usize;
        let b = b_bar as f64;
        let c = k.c;
        let rho = k.rho_bbar;
        let gap = k.gap_bbar();
        let eps = gap / (rho * b);
        let rho_tilde = rho * rho * (1.0 + b * eps);
        let one_minus = 1.0 - rho_tilde;
        let c_delta = (1.0 / eps + b) * 2.0 * b * c * c / one_minus;
        let phi_lb = p.ln_phi_lb().exp();
        let c_perp = c_delta * p.lipschitz_max * p.lipschitz_max / (phi_lb * phi_lb);
        let s2 = 1.0 - p.sigma * p.sigma;
        let alpha_mx = p.sigma * (one_minus / (2.0 * b * (b + 1.0 / eps) * c * c)).sqrt();
        let eps_x = (c_delta / s2).sqrt();
        let eps_y = (9.0 * c_perp * c_delta / s2).sqrt();
        if !(eps_y > 0.0) || !(phi_lb > 0.0) {
            return Err(SonataError::Config(
                "diagnostic needs L_mx > 0 and a representable phi_lb".into(),
            ));
        }
        let c_l = p.c_l();
        let coef_y = 0.5 * k.phi_ub / eps_y;
        let coef_x = 0.5 * k.phi_ub / s2
            * (c_l / eps_x + c_perp * (2.0 + alpha_mx).powi(2) / eps_y);
        let weights = (0..b_bar)
            .map(|j| (j as f64 + 1.0 + (b - j as f64 - 1.0) * rho_tilde) / one_minus)
            .collect();
        Ok(Self {
            b_bar,
            eps,
            rho_tilde,
            c_delta,
            c_perp,
            mu_min: s2,
            alpha_mx,
            eps_x,
            eps_y,
            phi_ub: k.phi_ub,
            c_l,
            coef_y,
            coef_x,
            weights,
        })
    }
}

/// Per-iteration quantities entering the energies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovSample {
    /// `U(xbar_phi^n)`.
    pub u_weighted_mean: f64,
    /// `||x^n - 1 (x) xbar_phi^n||^2`.
    pub consensus_sq: f64,
    /// `||y^n - 1 (x) ybar_phi^n||^2`.
    pub tracking_sq: f64,
    /// `||x~^n - 1 (x) xbar_phi^n||^2`.
    pub delta_tilde_sq: f64,
    pub alpha: f64,
}

impl LyapunovSample {
    pub fn from_state(
        problem: &ProblemInstance,
        state: &ConsensusState,
        x_tilde: &[DVector<f64>],
        alpha: f64,
    ) -> Self {
        let xb = weighted_average(&state.x, &state.phi);
        let yb = weighted_average(&state.y, &state.phi);
        Self {
            u_weighted_mean: problem.objective(&xb),
            consensus_sq: stacked_sq_deviation(&state.x, &xb),
            tracking_sq: stacked_sq_deviation(&state.y, &yb),
            delta_tilde_sq: stacked_sq_deviation(x_tilde, &xb),
            alpha,
        }
    }
}

/// Block energies starting at `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockEnergies {
    /// `sum_t (alpha^{n+t})^2 ||x~ - 1 (x) xbar_phi||^2`.
    pub delta_tilde: f64,
    pub consensus: f64,
    pub tracking: f64,
}

/// Collects samples and evaluates `V^n` and the block energies.
#[derive(Debug, Clone)]
pub struct LyapunovTracker {
    pub constants: LyapunovConstants,
    samples: Vec<LyapunovSample>,
}

/// One failed descent check `V^{n+B} <= V^n + tol`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentViolation {
    pub n: usize,
    pub v_n: f64,
    pub v_next: f64,
}

impl LyapunovTracker {
    pub fn new(constants: LyapunovConstants) -> Self {
        Self {
            constants,
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, s: LyapunovSample) {
        self.samples.push(s);
    }

    pub fn samples(&self) -> &[LyapunovSample] {
        &self.samples
    }

    fn window(&self, n: usize) -> Option<&[LyapunovSample]> {
        self.samples.get(n..n + self.constants.b_bar)
    }

    pub fn energies(&self, n: usize) -> Option<BlockEnergies> {
        let w = self.window(n)?;
        Some(BlockEnergies {
            delta_tilde: w.iter().map(|s| s.alpha * s.alpha * s.delta_tilde_sq).sum(),
            consensus: w.iter().map(|s| s.consensus_sq).sum(),
            tracking: w.iter().map(|s| s.tracking_sq).sum(),
        })
    }

    /// `V^n`, once samples `n..n+B` are in.
    pub fn value(&self, n: usize) -> Option<f64> {
        let w = self.window(n)?;
        let k = &self.constants;
        let u: f64 = w.iter().map(|s| s.u_weighted_mean).sum();
        let wy: f64 = w.iter().zip(&k.weights).map(|(s, c)| c * s.tracking_sq).sum();
        let wx: f64 = w.iter().zip(&k.weights).map(|(s, c)| c * s.consensus_sq).sum();
        Some(u + k.coef_y * wy + k.coef_x * wx)
    }

    /// Checks `V^{n+B} <= V^n + tol` at every block start `n = 0, B, 2B, ..`.
    pub fn descent_violations(&self, tol: f64) -> Result<Vec<DescentViolation>, SonataError> {
        let b = self.constants.b_bar;
        if self.samples.len() < 2 * b {
            return Err(SonataError::Config(format!(
                "{} samples, need at least 2 b_bar = {}",
                self.samples.len(),
                2 * b
            )));
        }
        let mut out = Vec::new();
        let mut n = 0;
        while let (Some(v_n), Some(v_next)) = (self.value(n), self.value(n + b)) {
            if v_next > v_n + tol {
                out.push(DescentViolation { n, v_n, v_next });
            }
            n += b;
        }
        Ok(out)
    }
}
