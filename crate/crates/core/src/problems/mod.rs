//! Problem instances `min_{x in K} sum_i f_i(x) + G(x)`.
//!
//! Each local cost is the quadratic `f_i(x) = s ||A_i x - b_i||^2` with
//! `s = +1` (least squares, convex) or `s = -1` (negative energy, concave).

mod constraint;
mod generators;
mod regularizer;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

pub use constraint::{soft_threshold, ConstraintSet};
pub use generators::{
    make_distributed_pca, make_sparse_regression, read_matrix_csv, PcaSource, SparseRegressionParams,
};
pub use regularizer::{
    DcParts, RegKind, Regularizer, DEFAULT_LP_EPS, DEFAULT_LP_EXPONENT, DEFAULT_SCAD_A,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("invalid regularizer: {0}")]
    InvalidRegularizer(String),
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("data ingestion: {0}")]
    Ingestion(String),
}

/// Quadratic local cost `sign * ||a x - b||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothLocalCost {
    a: DMatrix<f64>,
    b: DVector<f64>,
    sign: f64,
    lipschitz: f64,
}

impl SmoothLocalCost {
    /// `||a x - b||^2`.
    pub fn least_squares(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, ProblemError> {
        Self::build(a, b, 1.0)
    }

    /// `-||d x||^2`.
    pub fn negative_energy(d: DMatrix<f64>) -> Self {
        let rows = d.nrows();
        Self::build(d, DVector::zeros(rows), -1.0).expect("shapes agree by construction")
    }

    fn build(a: DMatrix<f64>, b: DVector<f64>, sign: f64) -> Result<Self, ProblemError> {
        if a.nrows() != b.len() {
            return Err(ProblemError::Invalid(format!(
                "data matrix has {} rows but target has {} entries",
                a.nrows(),
                b.len()
            )));
        }
        let lipschitz = 2.0 * largest_gram_eigenvalue(&a);
        Ok(Self {
            a,
            b,
            sign,
            lipschitz,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn data(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.a, &self.b)
    }

    pub fn is_convex(&self) -> bool {
        self.sign > 0.0
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.sign * (&self.a * x - &self.b).norm_squared()
    }

    pub fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        let r = &self.a * x - &self.b;
        self.a.tr_mul(&r) * (2.0 * self.sign)
    }

    /// Lipschitz constant of the gradient, `2 lambda_max(a^T a)`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

/// `lambda_max(a^T a)`, computed on the smaller of the two Gram matrices.
fn largest_gram_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let gram = if a.nrows() <= a.ncols() {
        a * a.transpose()
    } else {
        a.transpose() * a
    };
    SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// How agents initialize their copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitRule {
    Zero,
    /// Standard normal entries, then projected onto `K`.
    RandomNormalProjected,
}

/// A complete instance shared by all agents.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub costs: Vec<SmoothLocalCost>,
    pub reg: Regularizer,
    pub constraint: ConstraintSet,
    /// Reference point for NMSE.
    pub ground_truth: Option<DVector<f64>>,
    /// Compare against `+x*` and `-x*` and keep the better (eigenvectors).
    pub truth_up_to_sign: bool,
    pub init: InitRule,
    /// Whether `U` is known to be bounded below on `K`.
    pub bounded_below: bool,
}

impl ProblemInstance {
    pub fn new(
        costs: Vec<SmoothLocalCost>,
        reg: Regularizer,
        constraint: ConstraintSet,
    ) -> Result<Self, ProblemError> {
        let Some(first) = costs.first() else {
            return Err(ProblemError::Invalid("no local costs".into()));
        };
        let m = first.dim();
        if costs.iter().any(|c| c.dim() != m) {
            return Err(ProblemError::Invalid("local costs differ in dimension".into()));
        }
        // least squares is bounded below everywhere; concave costs on a bounded set
        let bounded_below = costs.iter().all(SmoothLocalCost::is_convex)
            || !matches!(constraint, ConstraintSet::FullSpace);
        Ok(Self {
            costs,
            reg,
            constraint,
            ground_truth: None,
            truth_up_to_sign: false,
            init: InitRule::Zero,
            bounded_below,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.costs.len()
    }

    pub fn dim(&self) -> usize {
        self.costs[0].dim()
    }

    /// `F(x) = sum_i f_i(x)`.
    pub fn smooth_value(&self, x: &DVector<f64>) -> f64 {
        self.costs.iter().map(|c| c.value(x)).sum()
    }

    /// `grad F(x)`.
    pub fn smooth_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(x.len());
        for c in &self.costs {
            g += c.grad(x);
        }
        g
    }

    /// `U(x) = F(x) + G(x)`.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        self.smooth_value(x) + self.reg.value(x)
    }

    /// `L = sum_i L_i`.
    pub fn lipschitz_sum(&self) -> f64 {
        self.costs.iter().map(SmoothLocalCost::lipschitz).sum()
    }

    /// `L_mx = max_i L_i`.
    pub fn lipschitz_max(&self) -> f64 {
        self.costs
            .iter()
            .map(SmoothLocalCost::lipschitz)
            .fold(0.0, f64::max)
    }

    /// Initial copies per [`InitRule`], drawn from `seed`.
    pub fn initial_point(&self, seed: u64) -> Vec<DVector<f64>> {
        let m = self.dim();
        match self.init {
            InitRule::Zero => vec![DVector::zeros(m); self.num_agents()],
            InitRule::RandomNormalProjected => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(INIT_STREAM);
                (0..self.num_agents())
                    .map(|_| {
                        let v = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
                        self.constraint.project(&v)
                    })
                    .collect()
            }
        }
    }
}

/// ChaCha stream reserved for initial points, away from the graph streams
/// (which are indexed by slot).
const INIT_STREAM: u64 = u64::MAX - 2;
/// ChaCha stream reserved for synthetic data.
pub(crate) const DATA_STREAM: u64 = u64::MAX - 1;
