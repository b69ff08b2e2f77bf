//! Benchmark instances: sparse linear regression and distributed PCA.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{
    ConstraintSet, InitRule, ProblemError, ProblemInstance, Regularizer, SmoothLocalCost,
    DATA_STREAM,
};

fn data_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(DATA_STREAM);
    rng
}

fn normal_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut *rng))
}

/// Size and noise of a sparse regression instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRegressionParams {
    pub num_agents: usize,
    pub dim: usize,
    pub rows_per_agent: usize,
    pub noise_sigma: f64,
    /// Fraction of ground-truth entries zeroed, smallest magnitudes first.
    pub sparsity: f64,
}

/// `f_i(x) = ||b_i - A_i x||^2` with unit-norm Gaussian rows and
/// `b_i = A_i x* + n_i`; unconstrained, started from zero.
pub fn make_sparse_regression(
    params: &SparseRegressionParams,
    seed: u64,
    reg: Regularizer,
) -> Result<ProblemInstance, ProblemError> {
    let SparseRegressionParams {
        num_agents,
        dim,
        rows_per_agent,
        noise_sigma,
        sparsity,
    } = *params;
    if num_agents == 0 || dim == 0 || rows_per_agent == 0 {
        return Err(ProblemError::Invalid("sizes must be positive".into()));
    }
    if !(0.0..=1.0).contains(&sparsity) || !(noise_sigma >= 0.0) {
        return Err(ProblemError::Invalid(
            "sparsity must lie in [0, 1] and noise must be nonnegative".into(),
        ));
    }
    let mut rng = data_rng(seed);
    let mut truth: DVector<f64> = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
    let zeroed = (sparsity * dim as f64).round() as usize;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| truth[a].abs().total_cmp(&truth[b].abs()));
    for &k in &order[..zeroed] {
        truth[k] = 0.0;
    }

    let mut costs = Vec::with_capacity(num_agents);
    for _ in 0..num_agents {
        let mut a = normal_matrix(&mut rng, rows_per_agent, dim);
        for mut row in a.row_iter_mut() {
            let n = row.norm();
            if n > 0.0 {
                row /= n;
            }
        }
        let noise = DVector::from_fn(rows_per_agent, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            noise_sigma * z
        });
        let b = &a * &truth + noise;
        costs.push(SmoothLocalCost::least_squares(a, b)?);
    }
    let mut p = ProblemInstance::new(costs, reg, ConstraintSet::FullSpace)?;
    p.ground_truth = Some(truth);
    p.init = InitRule::Zero;
    Ok(p)
}

/// Where distributed PCA takes its samples from.
#[derive(Debug, Clone, PartialEq)]
pub enum PcaSource {
    /// Rows `~ N(0, U diag(Lambda) U^T)` with `U` from the QR factor of a
    /// Gaussian matrix and `Lambda ~ U[0, 1]`. The covariance is drawn from
    /// `covariance_seed` so that it stays fixed across trials.
    Synthetic {
        rows_per_agent: usize,
        dim: usize,
        covariance_seed: u64,
    },
    /// Samples read from a headerless CSV, one per row.
    File(PathBuf),
}

/// `f_i(x) = -||D_i x||^2` over the unit ball; the ground truth is the
/// leading eigenvector of `sum_i D_i^T D_i`.
pub fn make_distributed_pca(
    num_agents: usize,
    source: &PcaSource,
    seed: u64,
) -> Result<ProblemInstance, ProblemError> {
    if num_agents == 0 {
        return Err(ProblemError::Invalid("need at least one agent".into()));
    }
    let mut rng = data_rng(seed);
    let blocks: Vec<DMatrix<f64>> = match source {
        PcaSource::Synthetic {
            rows_per_agent,
            dim,
            covariance_seed,
        } => {
            if *rows_per_agent == 0 || *dim == 0 {
                return Err(ProblemError::Invalid("sizes must be positive".into()));
            }
            let mut cov_rng = data_rng(*covariance_seed);
            let q = normal_matrix(&mut cov_rng, *dim, *dim).qr().q();
            let lambda = DVector::from_fn(*dim, |_, _| cov_rng.random::<f64>());
            // row = (Q diag(sqrt(lambda)) z)^T, so each block is Z diag(sqrt(lambda)) Q^T
            let scale = DMatrix::from_diagonal(&lambda.map(f64::sqrt));
            let root_t = scale * q.transpose();
            (0..num_agents)
                .map(|_| normal_matrix(&mut rng, *rows_per_agent, *dim) * &root_t)
                .collect()
        }
        PcaSource::File(path) => {
            let mut data = read_matrix_csv(path)?;
            let d = data.nrows();
            if d < num_agents {
                return Err(ProblemError::Ingestion(format!(
                    "{d} samples cannot be split among {num_agents} agents"
                )));
            }
            let mean = data.row_mean();
            for mut row in data.row_iter_mut() {
                row -= &mean;
            }
            let mut perm: Vec<usize> = (0..d).collect();
            perm.shuffle(&mut rng);
            let share = d / num_agents;
            (0..num_agents)
                .map(|i| {
                    let end = if i + 1 == num_agents { d } else { (i + 1) * share };
                    data.select_rows(&perm[i * share..end])
                })
                .collect()
        }
    };

    let dim = blocks[0].ncols();
    let mut gram = DMatrix::zeros(dim, dim);
    for blk in &blocks {
        gram += blk.transpose() * blk;
    }
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.imax();
    let truth = eig.eigenvectors.column(top).normalize();

    let costs = blocks.into_iter().map(SmoothLocalCost::negative_energy).collect();
    let mut p = ProblemInstance::new(costs, Regularizer::none(), ConstraintSet::Ball(1.0))?;
    p.ground_truth = Some(truth);
    p.truth_up_to_sign = true;
    p.init = InitRule::RandomNormalProjected;
    Ok(p)
}

/// Reads a dense numeric CSV (comma separated, no header).
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>, ProblemError> {
    let path = path.as_ref();
    let err = |msg: String| ProblemError::Ingestion(format!("{}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| err(e.to_string()))?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(err(format!("row {} has {} fields", r + 1, rec.len())));
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| err(format!("row {}, column {}: `{field}` is not a number", r + 1, c + 1)))?;
            values.push(v);
        }
        rows += 1;
    }
    let cols = cols.filter(|&c| c > 0).ok_or_else(|| err("no data".into()))?;
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}
