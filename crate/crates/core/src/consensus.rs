//! Perturbed condensed push-sum and the network constants that bound it.
//!
//! The protocol keeps de-biased iterates directly: with `phi' = A phi`,
//! agent `i` forms `x'_i = (1/phi'_i) sum_j a_ij phi_j x_j + delta_i`.
//! With `delta = 0` the weighted sum `sum_i phi_i x_i` is invariant.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::graph::{build_push_sum_weights, GraphError, GraphSequence, WeightMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConsensusError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid network parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Stacked agent copies `x_i`, trackers `y_i` and push-sum scalars `phi_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState {
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub phi: DVector<f64>,
}

impl ConsensusState {
    /// State with `phi = 1`.
    pub fn new(x: Vec<DVector<f64>>, y: Vec<DVector<f64>>) -> Self {
        let n = x.len();
        Self {
            x,
            y,
            phi: DVector::from_element(n, 1.0),
        }
    }

    pub fn num_agents(&self) -> usize {
        self.x.len()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, |v| v.len())
    }
}

/// `phi' = A phi`.
pub fn propagate_phi(a: &WeightMatrix, phi: &DVector<f64>) -> DVector<f64> {
    &a.entries * phi
}

/// Condensed push-sum mixing `(1/phi'_i) sum_j a_ij phi_j v_j` for every agent.
pub fn mix(
    a: &WeightMatrix,
    phi: &DVector<f64>,
    phi_new: &DVector<f64>,
    v: &[DVector<f64>],
) -> Vec<DVector<f64>> {
    let num = v.len();
    let dim = v.first().map_or(0, |x| x.len());
    (0..num)
        .map(|i| {
            let mut acc = DVector::zeros(dim);
            for j in 0..num {
                let w = a.entries[(i, j)];
                if w != 0.0 {
                    acc.axpy(w * phi[j], &v[j], 1.0);
                }
            }
            acc / phi_new[i]
        })
        .collect()
}

fn check_dims(state: &ConsensusState, a: &WeightMatrix) -> Result<(), ConsensusError> {
    let num = state.num_agents();
    if a.num_agents() != num || state.phi.len() != num || state.y.len() != num {
        return Err(ConsensusError::Dimension(format!(
            "{} agents in state, weight matrix is {}x{}",
            num,
            a.entries.nrows(),
            a.entries.ncols()
        )));
    }
    let m = state.dim();
    if state.x.iter().chain(state.y.iter()).any(|v| v.len() != m) {
        return Err(ConsensusError::Dimension(
            "agent vectors differ in length".into(),
        ));
    }
    Ok(())
}

/// One perturbed push-sum step on `x`; `y` is carried over unchanged.
pub fn push_sum_step(
    state: &ConsensusState,
    a: &WeightMatrix,
    delta: Option<&[DVector<f64>]>,
) -> Result<ConsensusState, ConsensusError> {
    check_dims(state, a)?;
    let phi_new = propagate_phi(a, &state.phi);
    let mut x = mix(a, &state.phi, &phi_new, &state.x);
    if let Some(d) = delta {
        if d.len() != x.len() || d.iter().any(|v| v.len() != state.dim()) {
            return Err(ConsensusError::Dimension(
                "perturbation does not match the state".into(),
            ));
        }
        for (xi, di) in x.iter_mut().zip(d) {
            *xi += di;
        }
    }
    Ok(ConsensusState {
        x,
        y: state.y.clone(),
        phi: phi_new,
    })
}

/// Equivalent row-stochastic weights `w_ij = a_ij phi_j / phi'_i`.
pub fn effective_row_stochastic(
    a: &WeightMatrix,
    phi: &DVector<f64>,
    phi_new: &DVector<f64>,
) -> DMatrix<f64> {
    let num = a.num_agents();
    DMatrix::from_fn(num, num, |i, j| a.entries[(i, j)] * phi[j] / phi_new[i])
}

/// `(1/I) sum_i phi_i v_i`.
pub fn weighted_average(v: &[DVector<f64>], phi: &DVector<f64>) -> DVector<f64> {
    let mut acc = DVector::zeros(v[0].len());
    for (vi, &p) in v.iter().zip(phi.iter()) {
        acc.axpy(p, vi, 1.0);
    }
    acc / v.len() as f64
}

/// Uniform average `(1/I) sum_i v_i`.
pub fn uniform_average(v: &[DVector<f64>]) -> DVector<f64> {
    let mut acc = DVector::zeros(v[0].len());
    for vi in v {
        acc += vi;
    }
    acc / v.len() as f64
}

/// Squared Euclidean norm of the stacked deviation from `center`.
pub fn stacked_sq_deviation(v: &[DVector<f64>], center: &DVector<f64>) -> f64 {
    v.iter().map(|vi| (vi - center).norm_squared()).sum()
}

/// `|| v - 1 (x) (1/I) sum_i phi_i v_i ||`.
pub fn disagreement(v: &[DVector<f64>], phi: &DVector<f64>) -> f64 {
    stacked_sq_deviation(v, &weighted_average(v, phi)).sqrt()
}

/// Consensus error of the agents' copies, measured from the weighted average.
pub fn consensus_error(state: &ConsensusState) -> f64 {
    disagreement(&state.x, &state.phi)
}

/// Same functional applied to the trackers.
pub fn tracking_disagreement(state: &ConsensusState) -> f64 {
    disagreement(&state.y, &state.phi)
}

/// Runs push-sum with the tracking perturbation
/// `delta_i^{n+1} = (u_i^{n+1} - u_i^n) / phi_i^{n+1}` from `x^0 = u^0`, and
/// returns `|| x^n - 1 (x) mean(u^n) ||` for `n = 0..=n_iters`.
pub fn track_average(
    signal: &dyn Fn(usize) -> Vec<DVector<f64>>,
    seq: &GraphSequence,
    n_iters: usize,
) -> Result<Vec<f64>, ConsensusError> {
    let mut u = signal(0);
    if u.len() != seq.num_agents {
        return Err(ConsensusError::Dimension(format!(
            "signal has {} agents, graph has {}",
            u.len(),
            seq.num_agents
        )));
    }
    let mut state = ConsensusState::new(u.clone(), u.clone());
    let mut errors = Vec::with_capacity(n_iters + 1);
    errors.push(stacked_sq_deviation(&state.x, &uniform_average(&u)).sqrt());
    for n in 0..n_iters {
        let a = build_push_sum_weights(&seq.snapshot(n)?);
        let u_next = signal(n + 1);
        let phi_new = propagate_phi(&a, &state.phi);
        let mut x = mix(&a, &state.phi, &phi_new, &state.x);
        for i in 0..x.len() {
            x[i] += (&u_next[i] - &u[i]) / phi_new[i];
        }
        state.x = x;
        state.phi = phi_new;
        u = u_next;
        errors.push(stacked_sq_deviation(&state.x, &uniform_average(&u)).sqrt());
    }
    Ok(errors)
}

/// Constants governing push-sum contraction on a B-strongly connected
/// sequence with minimum weight `kappa`.
///
/// For realistic networks several of these under- or overflow `f64`
/// (for example `1 - rho` near `1e-90` at ten agents), so the natural logs
/// of the critical quantities are kept alongside and `b_bar` may be
/// `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConstants {
    pub num_agents: usize,
    pub window: usize,
    pub kappa: f64,
    pub doubly_stochastic: bool,
    pub phi_lb: f64,
    pub phi_ub: f64,
    pub c0: f64,
    pub ln_c0: f64,
    pub rho: f64,
    /// `ln(1 - rho)`.
    pub ln_gap: f64,
    pub kappa_tilde: f64,
    /// Smallest `t` with `2 c0 I rho^floor(t/((I-1)B)) < 1`.
    pub b_bar: f64,
    pub ln_b_bar: f64,
    /// Contraction factor over `b_bar` steps.
    pub rho_bbar: f64,
    /// `ln(1 - rho_bbar)`. When `b_bar` is too large to resolve, this is the
    /// bound `ln(-ln rho)` on the true value.
    pub ln_gap_bbar: f64,
    pub c: f64,
}

impl NetworkConstants {
    /// `lambda^t = min{ sqrt(2) I, 2 c0 I rho^floor(t/((I-1)B)) }`.
    pub fn envelope(&self, t: usize) -> f64 {
        let num = self.num_agents as f64;
        let d = ((self.num_agents - 1) * self.window) as f64;
        let blocks = (t as f64 / d).floor();
        let ln_rho = ln_rho_from_gap(self.ln_gap);
        let ln_geo = (2.0 * num).ln() + self.ln_c0 + blocks * ln_rho;
        (std::f64::consts::SQRT_2 * num).min(ln_geo.exp())
    }

    /// `1 - rho_bbar`, possibly underflowing to zero.
    pub fn gap_bbar(&self) -> f64 {
        self.ln_gap_bbar.exp()
    }
}

/// `ln(rho)` from `ln(1 - rho)` without cancellation.
fn ln_rho_from_gap(ln_gap: f64) -> f64 {
    (-ln_gap.exp()).ln_1p()
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Network constants for `I` agents, window `B` and weight floor `kappa`.
/// The doubly stochastic flag applies the tightened values
/// `phi_lb = phi_ub = 1`, `c = 1`, `b_bar = B`, `rho_bbar = sqrt(1 - kappa/(2 I^2))`.
pub fn network_constants(
    num_agents: usize,
    window: usize,
    kappa: f64,
    doubly_stochastic: bool,
) -> Result<NetworkConstants, ConsensusError> {
    if num_agents < 2 {
        return Err(ConsensusError::InvalidParameter(
            "network constants need at least 2 agents".into(),
        ));
    }
    if window == 0 {
        return Err(ConsensusError::InvalidParameter("window B must be positive".into()));
    }
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(ConsensusError::InvalidParameter(format!(
            "kappa must lie in (0, 1), got {kappa}"
        )));
    }
    let num = num_agents as f64;
    let d = ((num_agents - 1) * window) as f64;
    let ln_kappa = kappa.ln();
    let ln_phi_lb = 2.0 * d * ln_kappa;
    let ln_kappa_tilde = (2.0 * d + 1.0) * ln_kappa - num.ln();
    let ln_gap = d * ln_kappa_tilde;
    let ln_c0 = std::f64::consts::LN_2 + softplus(-ln_gap);
    let rho = -ln_gap.exp_m1();

    // -ln(rho), kept in log form since it may underflow
    let ln_r = if ln_gap < -30.0 {
        ln_gap
    } else {
        (-ln_rho_from_gap(ln_gap)).ln()
    };
    let a = (2.0 * num).ln() + ln_c0;
    let ln_blocks_est = a.ln() - ln_r;
    let (b_bar, ln_b_bar, rho_bbar, ln_gap_bbar) = if ln_blocks_est < 600.0 {
        let r = ln_r.exp();
        let blocks = (a / r).floor() + 1.0;
        let ln_rho_bbar = a - blocks * r;
        let b_bar = blocks * d;
        (
            b_bar,
            b_bar.ln(),
            ln_rho_bbar.exp(),
            (-ln_rho_bbar.exp_m1()).ln(),
        )
    } else {
        (f64::INFINITY, ln_blocks_est + d.ln(), 1.0, ln_r)
    };

    let mut k = NetworkConstants {
        num_agents,
        window,
        kappa,
        doubly_stochastic,
        phi_lb: ln_phi_lb.exp(),
        phi_ub: num - ln_phi_lb.exp(),
        c0: ln_c0.exp(),
        ln_c0,
        rho,
        ln_gap,
        kappa_tilde: ln_kappa_tilde.exp(),
        b_bar,
        ln_b_bar,
        rho_bbar,
        ln_gap_bbar,
        c: num * (2.0 * num).sqrt(),
    };
    if doubly_stochastic {
        let gap = kappa / (2.0 * num * num);
        let rho_bbar = (1.0 - gap).sqrt();
        k.phi_lb = 1.0;
        k.phi_ub = 1.0;
        k.c = 1.0;
        k.b_bar = window as f64;
        k.ln_b_bar = k.b_bar.ln();
        k.rho_bbar = rho_bbar;
        // 1 - sqrt(1 - g) = g / (1 + sqrt(1 - g))
        k.ln_gap_bbar = (gap / (1.0 + rho_bbar)).ln();
    }
    Ok(k)
}
