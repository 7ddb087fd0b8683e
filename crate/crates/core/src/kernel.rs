//! Dense linear-algebra kernel: SVD, numeric rank, null-space projectors,
//! Kronecker products and column-major vectorization, symmetric right-solves
//! and a deterministic two-component PCA.
//!
//! SVD is delegated to `faer`, the other factorizations to `nalgebra`; everything built on top of
//! them (rank decisions, projectors, ridge fallback, sign conventions) lives
//! here so the editors share a single set of tolerances.

use nalgebra::linalg::{Cholesky, SymmetricEigen};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Relative singular-value threshold below which a direction counts as zero.
pub const DEFAULT_REL_TOL: f64 = 1e-10;

/// Default cap on the number of entries a Kronecker product may materialize.
pub const DEFAULT_KRON_CAP: usize = 1 << 26;

/// Relative ridge factor used when a symmetric solve is rank deficient.
pub const DEFAULT_RIDGE: f64 = 1e-8;

const EIGEN_MAX_ITERS: usize = 10_000;

/// A Cholesky pivot smaller than this fraction of the largest diagonal entry
/// is treated as a failed factorization.
const PIVOT_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SvdResult {
    /// `m x r` left singular vectors, `r = min(rows, cols)`.
    pub u: Matrix,
    /// Non-increasing, length `r`.
    pub singular_values: Vec<f64>,
    /// `r x n` right singular vectors (as rows).
    pub vt: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        let s = Matrix::from_diagonal(&self.singular_values).expect("finite spectrum");
        self.u.matmul(&s).matmul(&self.vt)
    }
}

/// Thin SVD with singular values sorted in non-increasing order.
pub fn svd(m: &Matrix) -> Result<SvdResult> {
    let (rows, cols) = m.shape();
    let r = rows.min(cols);
    if r == 0 {
        return Ok(SvdResult {
            u: Matrix::zeros(rows, 0),
            singular_values: Vec::new(),
            vt: Matrix::zeros(0, cols),
        });
    }
    let a = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m.get(i, j));
    let dec = a
        .thin_svd()
        .map_err(|e| Error::numerical(format!("SVD of a {rows}x{cols} matrix did not converge: {e:?}")))?;
    let (u, s, v) = (dec.U(), dec.S().column_vector(), dec.V());
    // faer already sorts non-increasing
    let singular_values: Vec<f64> = (0..r).map(|k| s[k].max(0.0)).collect();
    let u_sorted = DMatrix::from_fn(rows, r, |i, k| u[(i, k)]);
    let vt_sorted = DMatrix::from_fn(r, cols, |k, j| v[(j, k)]);

    Ok(SvdResult {
        u: Matrix::from_dmatrix(u_sorted)?,
        singular_values,
        vt: Matrix::from_dmatrix(vt_sorted)?,
    })
}

/// Number of singular values strictly above `rel_tol * sigma_1`.
pub fn numeric_rank(singular_values: &[f64], rel_tol: f64) -> usize {
    let Some(&top) = singular_values.first() else {
        return 0;
    };
    if top <= 0.0 {
        return 0;
    }
    let cut = rel_tol * top;
    singular_values.iter().filter(|&&s| s > cut).count()
}

/// Rank of `m` under the relative threshold.
pub fn matrix_rank(m: &Matrix, rel_tol: f64) -> Result<usize> {
    Ok(numeric_rank(&svd(m)?.singular_values, rel_tol))
}

/// Rank of an orthogonal projector: its singular values are 0 or 1, so they
/// are split at 1/2 instead of relative to the largest one (which would
/// count rounding noise in a zero projector).
pub fn projector_rank(p: &Matrix) -> Result<usize> {
    Ok(svd(p)?.singular_values.iter().filter(|&&s| s > 0.5).count())
}

/// Orthogonal projector onto the right null space of `m`.
///
/// For `m: n x d` returns the `d x d` matrix `I - V_r V_r^T`, where the rows
/// of `V_r^T` are the right singular vectors with non-negligible singular
/// value. Hence `m * P = 0`. Pass `M_f^T` to obtain the forget projector.
pub fn row_null_projector(m: &Matrix, rel_tol: f64) -> Result<Matrix> {
    let d = m.cols();
    let dec = svd(m)?;
    let r = numeric_rank(&dec.singular_values, rel_tol);
    let vr = DMatrix::from_fn(d, r, |i, k| dec.vt.get(k, i));
    let p = DMatrix::identity(d, d) - &vr * vr.transpose();
    Matrix::from_dmatrix(p)?
        .symmetrized()
        .ensure_finite("row_null_projector")
}

/// Symmetric eigendecomposition with eigenvalues sorted non-increasing.
/// Returns `(eigenvalues, eigenvectors as columns)`.
pub fn sym_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    if !m.is_square() {
        return Err(Error::validation(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    if n == 0 {
        return Ok((Vec::new(), Matrix::zeros(0, 0)));
    }
    let dec = SymmetricEigen::try_new(m.symmetrized().into_dmatrix(), f64::EPSILON, EIGEN_MAX_ITERS)
        .ok_or_else(|| Error::numerical(format!("symmetric eigensolver failed on {n}x{n}")))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dec.eigenvalues[b].total_cmp(&dec.eigenvalues[a]));
    let values = order.iter().map(|&i| dec.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, k| dec.eigenvectors[(i, order[k])]);
    Ok((values, Matrix::from_dmatrix(vectors)?))
}

/// Kronecker product with the default size cap.
pub fn kronecker(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    kronecker_capped(a, b, DEFAULT_KRON_CAP)
}

/// `(p*m) x (q*n)` block matrix whose `(i, j)` block is `a[i, j] * b`.
pub fn kronecker_capped(a: &Matrix, b: &Matrix, max_entries: usize) -> Result<Matrix> {
    let (p, q) = a.shape();
    let (m, n) = b.shape();
    let required = p
        .checked_mul(m)
        .and_then(|x| x.checked_mul(q))
        .and_then(|x| x.checked_mul(n))
        .unwrap_or(usize::MAX);
    if required > max_entries {
        return Err(Error::ComplexityLimit {
            what: "Kronecker product entries",
            required,
            cap: max_entries,
        });
    }
    let ad = a.as_dmatrix();
    let bd = b.as_dmatrix();
    let out = DMatrix::from_fn(p * m, q * n, |r, c| ad[(r / m, c / n)] * bd[(r % m, c % n)]);
    Matrix::from_dmatrix(out)
}

/// Column-major stacking into a `(rows*cols) x 1` matrix.
pub fn vectorize(m: &Matrix) -> Matrix {
    let data = m.as_col_major().to_vec();
    Matrix::from_dmatrix_unchecked(DMatrix::from_vec(data.len(), 1, data))
}

/// Inverse of [`vectorize`]; accepts a column or row vector.
pub fn unvectorize(v: &Matrix, rows: usize, cols: usize) -> Result<Matrix> {
    if v.rows() != 1 && v.cols() != 1 {
        return Err(Error::validation(format!(
            "unvectorize expects a vector, got {}x{}",
            v.rows(),
            v.cols()
        )));
    }
    let len = v.rows() * v.cols();
    if len != rows * cols {
        return Err(Error::validation(format!(
            "cannot reshape {len} entries into {rows}x{cols}"
        )));
    }
    // Row and column vectors store their entries contiguously either way.
    Ok(Matrix::from_dmatrix_unchecked(DMatrix::from_column_slice(
        rows,
        cols,
        v.as_col_major(),
    )))
}

#[derive(Clone, Debug)]
pub struct SymSolve {
    pub x: Matrix,
    /// Absolute ridge `mu` added to the diagonal, `0.0` when none was needed.
    pub ridge: f64,
    /// Ratio of the largest diagonal entry to the smallest squared Cholesky
    /// pivot of the factored matrix; a cheap condition-number proxy.
    pub condition_estimate: f64,
}

/// Solves `X * S = rhs` for symmetric `s`.
///
/// A Cholesky factorization of `S` is attempted first. If it fails or a
/// pivot collapses, the system is retried once with
/// `mu = ridge * trace(S) / dim(S)` on the diagonal; `ridge = 0` disables the
/// fallback.
pub fn solve_right_sym(rhs: &Matrix, s: &Matrix, ridge: f64) -> Result<SymSolve> {
    if !s.is_square() {
        return Err(Error::validation(format!(
            "solve_right_sym needs a square system matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    let n = s.rows();
    if rhs.cols() != n {
        return Err(Error::validation(format!(
            "rhs has {} columns but the system is {n}x{n}",
            rhs.cols()
        )));
    }
    if ridge < 0.0 || !ridge.is_finite() {
        return Err(Error::validation(format!("ridge must be finite and >= 0, got {ridge}")));
    }
    let asym = (s - &s.transpose()).frobenius_norm();
    if asym > 1e-8 * s.frobenius_norm() {
        return Err(Error::validation(format!(
            "system matrix is not symmetric (|S - S^T|_F = {asym:.3e})"
        )));
    }
    if n == 0 {
        return Ok(SymSolve {
            x: Matrix::zeros(rhs.rows(), 0),
            ridge: 0.0,
            condition_estimate: 1.0,
        });
    }
    let sym = s.symmetrized().into_dmatrix();
    let rhs_t = rhs.as_dmatrix().transpose();

    let (chol, cond) = cholesky_checked(&sym);
    if let Some(chol) = chol {
        let x = chol.solve(&rhs_t).transpose();
        let x = Matrix::from_dmatrix(x)?;
        return Ok(SymSolve {
            x,
            ridge: 0.0,
            condition_estimate: cond,
        });
    }
    if ridge == 0.0 {
        return Err(Error::numerical(format!(
            "symmetric {n}x{n} system is singular (condition estimate {cond:.3e}) and ridge is disabled"
        )));
    }
    let mu = ridge * sym.trace() / n as f64;
    if mu <= 0.0 || !mu.is_finite() {
        return Err(Error::numerical(format!(
            "symmetric {n}x{n} system is singular (condition estimate {cond:.3e}); \
             trace {:.3e} gives no usable ridge",
            sym.trace()
        )));
    }
    let ridged = &sym + DMatrix::identity(n, n) * mu;
    let (chol, cond_ridged) = cholesky_checked(&ridged);
    let Some(chol) = chol else {
        return Err(Error::numerical(format!(
            "symmetric {n}x{n} system is singular even with ridge {mu:.3e} \
             (condition estimate {cond_ridged:.3e})"
        )));
    };
    log::debug!("solve_right_sym: applied ridge {mu:.3e} to a {n}x{n} system (cond ~{cond:.3e})");
    let x = Matrix::from_dmatrix(chol.solve(&rhs_t).transpose())?;
    Ok(SymSolve {
        x,
        ridge: mu,
        condition_estimate: cond_ridged,
    })
}

fn cholesky_checked(s: &DMatrix<f64>) -> (Option<Cholesky<f64, nalgebra::Dyn>>, f64) {
    let max_diag = s.diagonal().iter().fold(0.0_f64, |m, &x| m.max(x));
    let Some(chol) = Cholesky::new(s.clone()) else {
        return (None, f64::INFINITY);
    };
    let min_pivot = chol
        .l_dirty()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, &x| m.min(x * x));
    let cond = if min_pivot > 0.0 {
        max_diag / min_pivot
    } else {
        f64::INFINITY
    };
    if !(max_diag > 0.0) || min_pivot < PIVOT_FLOOR * max_diag {
        return (None, cond);
    }
    (Some(chol), cond)
}

/// Projects `n_samples x d` data onto its top two principal directions.
///
/// Each component's sign is chosen so that its largest-magnitude loading is
/// positive, which makes the output reproducible across runs.
pub fn pca_2d(data: &Matrix, center: bool) -> Result<Matrix> {
    let (n, d) = data.shape();
    if d < 2 {
        return Err(Error::validation(format!(
            "PCA to 2-D needs at least 2 features, got {d}"
        )));
    }
    if n < 2 {
        return Err(Error::validation(format!("PCA needs at least 2 samples, got {n}")));
    }
    let mut x = data.as_dmatrix().clone();
    if center {
        for j in 0..d {
            let mean = x.column(j).mean();
            x.column_mut(j).add_scalar_mut(-mean);
        }
    }
    let centered = Matrix::from_dmatrix(x)?;
    let dec = svd(&centered)?;
    let mut components = DMatrix::zeros(d, 2);
    for k in 0..2 {
        let row: Vec<f64> = (0..d).map(|j| dec.vt.get(k, j)).collect();
        let (mut best, mut best_abs) = (0usize, -1.0_f64);
        for (j, v) in row.iter().enumerate() {
            // strict comparison keeps the first index on ties
            if v.abs() > best_abs + 1e-12 {
                best = j;
                best_abs = v.abs();
            }
        }
        let sign = if row[best] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[(j, k)] = sign * row[j];
        }
    }
    Matrix::from_dmatrix(centered.as_dmatrix() * components)
}
