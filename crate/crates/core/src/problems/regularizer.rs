//! Separable sparsity regularizers `G(x) = lambda sum_k g(x_k)` with the DC
//! split `g = eta |x| - g_minus`, where `g_minus` is convex and smooth.

use nalgebra::DVector;

use super::ProblemError;

/// Shape of the scalar penalty `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegKind {
    /// `G = 0`.
    None,
    /// `g = |x|`.
    L1,
    /// `g = 1 - exp(-theta |x|)`.
    Exp,
    /// `g = (|x| + eps)^(1/theta)`, `theta > 1`.
    LpPlus,
    /// `g = 1 - (theta |x| + 1)^p`, `p < 0`.
    LpMinus,
    /// Smoothly clipped absolute deviation with knee parameter `a`.
    Scad,
    /// `g = log(1 + theta |x|) / log(1 + theta)`.
    Log,
}

impl RegKind {
    /// The nonconvex kinds, each an approximation of the l0 count.
    pub const NONCONVEX: [RegKind; 5] = [
        RegKind::Exp,
        RegKind::LpPlus,
        RegKind::LpMinus,
        RegKind::Scad,
        RegKind::Log,
    ];
}

/// A regularizer with its parameters; construct with [`Regularizer::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct Regularizer {
    pub kind: RegKind,
    pub theta: f64,
    pub lambda: f64,
    /// SCAD knee, `a > 1`.
    pub scad_a: f64,
    /// Offset of `LpPlus`, `eps > 0`.
    pub eps: f64,
    /// Exponent of `LpMinus`, `p < 0`.
    pub p: f64,
}

/// Value split `gplus - gminus` and the gradient of `gminus`, all scaled by lambda.
#[derive(Debug, Clone, PartialEq)]
pub struct DcParts {
    pub gplus: f64,
    pub gminus: f64,
    pub grad_gminus: DVector<f64>,
}

pub const DEFAULT_SCAD_A: f64 = 3.7;
pub const DEFAULT_LP_EPS: f64 = 1e-4;
pub const DEFAULT_LP_EXPONENT: f64 = -1.0;

fn sign(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Regularizer {
    /// Regularizer with default `scad_a`, `eps` and `p`.
    pub fn new(kind: RegKind, theta: f64, lambda: f64) -> Result<Self, ProblemError> {
        Self {
            kind,
            theta,
            lambda,
            scad_a: DEFAULT_SCAD_A,
            eps: DEFAULT_LP_EPS,
            p: DEFAULT_LP_EXPONENT,
        }
        .validated()
    }

    pub fn none() -> Self {
        Self {
            kind: RegKind::None,
            theta: 1.0,
            lambda: 0.0,
            scad_a: DEFAULT_SCAD_A,
            eps: DEFAULT_LP_EPS,
            p: DEFAULT_LP_EXPONENT,
        }
    }

    pub fn with_scad_a(mut self, a: f64) -> Result<Self, ProblemError> {
        self.scad_a = a;
        self.validated()
    }

    pub fn with_eps(mut self, eps: f64) -> Result<Self, ProblemError> {
        self.eps = eps;
        self.validated()
    }

    pub fn with_exponent(mut self, p: f64) -> Result<Self, ProblemError> {
        self.p = p;
        self.validated()
    }

    /// Checks parameter ranges for the kind.
    pub fn validated(self) -> Result<Self, ProblemError> {
        let bad = |msg: String| Err(ProblemError::InvalidRegularizer(msg));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        if matches!(self.kind, RegKind::None | RegKind::L1) {
            return Ok(self);
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return bad(format!("theta must be positive, got {}", self.theta));
        }
        match self.kind {
            RegKind::Scad if !(self.scad_a > 1.0) => bad(format!("SCAD needs a > 1, got {}", self.scad_a)),
            RegKind::LpPlus if !(self.eps > 0.0) => bad(format!("eps must be positive, got {}", self.eps)),
            RegKind::LpPlus if !(self.theta > 1.0) => {
                bad(format!("LpPlus needs theta > 1 so that 1/theta lies in (0, 1), got {}", self.theta))
            }
            RegKind::LpMinus if !(self.p < 0.0) => bad(format!("LpMinus needs p < 0, got {}", self.p)),
            _ => Ok(self),
        }
    }

    /// True when `G` vanishes identically.
    pub fn is_zero(&self) -> bool {
        self.kind == RegKind::None || self.lambda == 0.0
    }

    /// Unscaled penalty `g(t)`.
    pub fn g(&self, t: f64) -> f64 {
        let a = t.abs();
        let th = self.theta;
        match self.kind {
            RegKind::None => 0.0,
            RegKind::L1 => a,
            RegKind::Exp => -(-th * a).exp_m1(),
            RegKind::LpPlus => (a + self.eps).powf(1.0 / th),
            RegKind::LpMinus => 1.0 - (th * a + 1.0).powf(self.p),
            RegKind::Scad => {
                let sa = self.scad_a;
                if a <= 1.0 / th {
                    2.0 * th * a / (sa + 1.0)
                } else if a <= sa / th {
                    (-th * th * a * a + 2.0 * sa * th * a - 1.0) / (sa * sa - 1.0)
                } else {
                    1.0
                }
            }
            RegKind::Log => (th * a).ln_1p() / th.ln_1p(),
        }
    }

    /// Slope `eta` of the convex part `eta |t|`.
    pub fn eta(&self) -> f64 {
        let th = self.theta;
        match self.kind {
            RegKind::None => 0.0,
            RegKind::L1 => 1.0,
            RegKind::Exp => th,
            RegKind::LpPlus => self.eps.powf(1.0 / th - 1.0) / th,
            RegKind::LpMinus => -self.p * th,
            RegKind::Scad => 2.0 * th / (self.scad_a + 1.0),
            RegKind::Log => th / th.ln_1p(),
        }
    }

    /// Unscaled derivative of `g_minus = eta |t| - g(t)`; zero at `t = 0`.
    pub fn dg_minus(&self, t: f64) -> f64 {
        let a = t.abs();
        let s = sign(t);
        let th = self.theta;
        match self.kind {
            RegKind::None | RegKind::L1 => 0.0,
            RegKind::Exp => s * th * (-(-th * a).exp_m1()),
            RegKind::LpPlus => {
                let q = 1.0 / th;
                s * q * (self.eps.powf(q - 1.0) - (a + self.eps).powf(q - 1.0))
            }
            RegKind::LpMinus => -s * self.p * th * (1.0 - (1.0 + th * a).powf(self.p - 1.0)),
            RegKind::Scad => {
                let sa = self.scad_a;
                if a <= 1.0 / th {
                    0.0
                } else if a <= sa / th {
                    s * 2.0 * th * (th * a - 1.0) / (sa * sa - 1.0)
                } else {
                    s * 2.0 * th / (sa + 1.0)
                }
            }
            RegKind::Log => s * th * th * a / (th.ln_1p() * (1.0 + th * a)),
        }
    }

    /// Weight of the l1 part, `lambda * eta`.
    pub fn l1_weight(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            self.lambda * self.eta()
        }
    }

    /// `G(x) = lambda sum_k g(x_k)`.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        self.lambda * x.iter().map(|&t| self.g(t)).sum::<f64>()
    }

    /// `G_plus(x) = lambda eta ||x||_1`.
    pub fn gplus(&self, x: &DVector<f64>) -> f64 {
        self.l1_weight() * x.lp_norm(1)
    }

    /// `grad G_minus(x)`, componentwise and scaled by lambda.
    pub fn grad_gminus(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.is_zero() {
            return DVector::zeros(x.len());
        }
        x.map(|t| self.lambda * self.dg_minus(t))
    }

    pub fn dc_parts(&self, x: &DVector<f64>) -> DcParts {
        let gplus = self.gplus(x);
        DcParts {
            gplus,
            gminus: gplus - self.value(x),
            grad_gminus: self.grad_gminus(x),
        }
    }

    /// A subgradient of `G` with `sign(0) = 0`.
    pub fn subgradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let w = self.l1_weight();
        x.map(sign) * w - self.grad_gminus(x)
    }

    /// Lipschitz constant `L_G` of `grad G_minus`, the supremum of the second
    /// derivative of `lambda g_minus`.
    pub fn lipschitz_grad_gminus(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let th = self.theta;
        let curvature = match self.kind {
            RegKind::None | RegKind::L1 => 0.0,
            RegKind::Exp => th * th,
            RegKind::LpPlus => {
                let q = 1.0 / th;
                q * (1.0 - q) * self.eps.powf(q - 2.0)
            }
            RegKind::LpMinus => self.p * (self.p - 1.0) * th * th,
            RegKind::Scad => 2.0 * th * th / (self.scad_a * self.scad_a - 1.0),
            RegKind::Log => th * th / th.ln_1p(),
        };
        self.lambda * curvature
    }
}
