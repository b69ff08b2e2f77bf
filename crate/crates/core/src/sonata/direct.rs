//! Special-case recursions written directly in stacked matrix form.
//!
//! They share nothing with the general iteration beyond the problem data,
//! so they serve as independent references for it.
//!
//! ```text
//! NEXT-L  ATC: x' = W (x - a y)       CAA: x' = W x - a y
//!              y' = W y + g(x') - g(x)
//! DIGing:      x' = W x - a y,  y' = W y + g(x') - g(x)
//! Aug-DGM:     x' = W (x - a y),  y' = W (y + g(x') - g(x))
//! ADD-OPT:     z' = A z - a y~,  phi' = A phi,  x' = z' / phi',
//!              y~' = A y~ + g(x') - g(x)
//! ```

use nalgebra::{DMatrix, DVector};

use crate::problems::ProblemInstance;

use super::Mixing;

/// `(M v)_i = sum_j m_ij v_j`.
fn apply(m: &DMatrix<f64>, v: &[DVector<f64>]) -> Vec<DVector<f64>> {
    (0..m.nrows())
        .map(|i| {
            v.iter()
                .enumerate()
                .fold(DVector::zeros(v[0].len()), |acc, (j, vj)| acc + vj * m[(i, j)])
        })
        .collect()
}

fn grads(problem: &ProblemInstance, x: &[DVector<f64>]) -> Vec<DVector<f64>> {
    problem.costs.iter().zip(x).map(|(c, xi)| c.grad(xi)).collect()
}

fn sub(a: &[DVector<f64>], b: &[DVector<f64>]) -> Vec<DVector<f64>> {
    a.iter().zip(b).map(|(p, q)| p - q).collect()
}

fn add(a: &[DVector<f64>], b: &[DVector<f64>]) -> Vec<DVector<f64>> {
    a.iter().zip(b).map(|(p, q)| p + q).collect()
}

fn scale(a: &[DVector<f64>], s: f64) -> Vec<DVector<f64>> {
    a.iter().map(|p| p * s).collect()
}

/// Copies and trackers of a doubly stochastic recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingState {
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
}

impl TrackingState {
    /// `y^0 = g(x^0)`.
    pub fn new(problem: &ProblemInstance, x0: Vec<DVector<f64>>) -> Self {
        let y = grads(problem, &x0);
        Self { x: x0, y }
    }
}

/// One NEXT-L step with doubly stochastic `w`.
pub fn next_l_step(
    w: &DMatrix<f64>,
    problem: &ProblemInstance,
    s: &TrackingState,
    alpha: f64,
    mixing: Mixing,
) -> TrackingState {
    let x = match mixing {
        Mixing::Atc => apply(w, &sub(&s.x, &scale(&s.y, alpha))),
        Mixing::Caa => sub(&apply(w, &s.x), &scale(&s.y, alpha)),
    };
    let dg = sub(&grads(problem, &x), &grads(problem, &s.x));
    let y = add(&apply(w, &s.y), &dg);
    TrackingState { x, y }
}

/// One DIGing step.
pub fn diging_step(
    w: &DMatrix<f64>,
    problem: &ProblemInstance,
    s: &TrackingState,
    alpha: f64,
) -> TrackingState {
    let wx = apply(w, &s.x);
    let x: Vec<DVector<f64>> = wx.iter().zip(&s.y).map(|(a, b)| a - b * alpha).collect();
    let g_new = grads(problem, &x);
    let g_old = grads(problem, &s.x);
    let wy = apply(w, &s.y);
    let y = (0..x.len()).map(|i| &wy[i] + &g_new[i] - &g_old[i]).collect();
    TrackingState { x, y }
}

/// One Aug-DGM step with per-agent steps.
pub fn aug_dgm_step(
    w: &DMatrix<f64>,
    problem: &ProblemInstance,
    s: &TrackingState,
    alphas: &[f64],
) -> TrackingState {
    let moved: Vec<DVector<f64>> = (0..s.x.len()).map(|i| &s.x[i] - &s.y[i] * alphas[i]).collect();
    let x = apply(w, &moved);
    let dg = sub(&grads(problem, &x), &grads(problem, &s.x));
    let y = apply(w, &add(&s.y, &dg));
    TrackingState { x, y }
}

/// Unnormalized iterates `z`, trackers `y~` and push-sum scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct AddOptState {
    pub z: Vec<DVector<f64>>,
    pub y_tilde: Vec<DVector<f64>>,
    pub phi: DVector<f64>,
}

impl AddOptState {
    /// `z^0 = x^0`, `y~^0 = g(x^0)`, `phi^0 = 1`.
    pub fn new(problem: &ProblemInstance, x0: Vec<DVector<f64>>) -> Self {
        let y_tilde = grads(problem, &x0);
        let n = x0.len();
        Self {
            z: x0,
            y_tilde,
            phi: DVector::from_element(n, 1.0),
        }
    }

    /// De-biased copies `x = z / phi`.
    pub fn x(&self) -> Vec<DVector<f64>> {
        self.z.iter().zip(self.phi.iter()).map(|(z, p)| z / *p).collect()
    }
}

/// One ADD-OPT step with column stochastic `a`.
pub fn add_opt_step(
    a: &DMatrix<f64>,
    problem: &ProblemInstance,
    s: &AddOptState,
    alpha: f64,
) -> AddOptState {
    let x_old = s.x();
    let z = sub(&apply(a, &s.z), &scale(&s.y_tilde, alpha));
    let phi = a * &s.phi;
    let x: Vec<DVector<f64>> = z.iter().zip(phi.iter()).map(|(zi, p)| zi / *p).collect();
    let dg = sub(&grads(problem, &x), &grads(problem, &x_old));
    let y_tilde = add(&apply(a, &s.y_tilde), &dg);
    AddOptState { z, y_tilde, phi }
}
