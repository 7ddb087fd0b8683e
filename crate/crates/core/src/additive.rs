//! Multi-sample additive editor `W <- W + D P_m`.
//!
//! `P_m` projects onto the null space of `K_0^T`, so the retained outputs
//! `W K_0` are preserved exactly by any `D`. The remaining objective
//!
//! ```text
//! |M_f^T (W + D P_m) K_f|^2 + |(W + D P_m) K_f - M_n|^2 + |D P_m|^2
//! ```
//!
//! is a convex quadratic whose stationarity condition is the Sylvester
//! equation `Q D H + D C = Z`. It is solved either directly through the
//! Kronecker-vectorized system (small layers only) or by gradient descent.

use std::time::Instant;

use nalgebra::linalg::{Cholesky, LU};

use crate::descent::{minimize, GdConfig, SmoothObjective};
use crate::error::{Error, Result};
use crate::facts::KnowledgeSets;
use crate::kernel::{kronecker_capped, projector_rank, sym_eigen, unvectorize, vectorize};
use crate::matrix::{expect_shape, Matrix};
use crate::multiplicative::{objective_terms, EditReport, GdSummary, Method};

/// Eigenvalues of `K_0 K_0^T` at or below this fraction of the largest one
/// count as zero.
pub const DEFAULT_EIG_REL_TOL: f64 = 1e-8;

/// Default cap on `d_m * d_k` for the Kronecker solve.
pub const DEFAULT_DIM_CAP: usize = 2048;

/// `P_m = U' U'^T` where `U'` spans the zero-eigenvalue eigenvectors of
/// `K_0 K_0^T`. Returns the zero matrix when `K_0` has full row rank.
pub fn retain_null_projector(k_0: &Matrix, rel_tol: f64) -> Result<Matrix> {
    let d_k = k_0.rows();
    let (values, vectors) = sym_eigen(&k_0.matmul_t(k_0))?;
    let top = values.first().copied().unwrap_or(0.0);
    let null: Vec<usize> = (0..d_k).filter(|&i| top <= 0.0 || values[i] <= rel_tol * top).collect();
    let basis = vectors.select_columns(&null);
    let p_m = basis.matmul_t(&basis).symmetrized();
    if null.is_empty() {
        log::warn!("K_0 has full row rank {d_k}: the retain projector is zero and the additive edit has no capacity");
    }
    p_m.ensure_finite("retain_null_projector")
}

/// `Q D H + D C = Z`.
#[derive(Clone, Debug)]
pub struct SylvesterSystem {
    /// `M_f M_f^T + I`, `d_m x d_m`
    pub q: Matrix,
    /// `P_m K_f K_f^T P_m^T`, `d_k x d_k`
    pub h: Matrix,
    /// `P_m P_m^T`, `d_k x d_k`
    pub c: Matrix,
    /// `M_n K_f^T P_m^T - Q W K_f K_f^T P_m^T`, `d_m x d_k`
    pub z: Matrix,
}

impl SylvesterSystem {
    pub fn residual(&self, d: &Matrix) -> Matrix {
        &(&self.q.matmul(d).matmul(&self.h) + &d.matmul(&self.c)) - &self.z
    }
}

fn check_inputs(w: &Matrix, sets: &KnowledgeSets, p_m: &Matrix) -> Result<()> {
    sets.check_weight(w)?;
    expect_shape(p_m, w.cols(), w.cols(), "P_m")?;
    if sets.n_forget() == 0 {
        return Err(Error::validation("the additive editor needs at least one forget fact"));
    }
    Ok(())
}

pub fn assemble_sylvester(w: &Matrix, sets: &KnowledgeSets, p_m: &Matrix) -> Result<SylvesterSystem> {
    check_inputs(w, sets, p_m)?;
    let m_f = sets.m_f();
    let q = &m_f.matmul_t(m_f) + &Matrix::identity(w.rows());
    let pk = p_m.matmul(sets.k_f());
    let h = pk.matmul_t(&pk);
    let c = p_m.matmul_t(p_m);
    let wk = w.matmul(sets.k_f());
    let z = &sets.m_n().matmul_t(&pk) - &q.matmul(&wk).matmul_t(&pk);
    Ok(SylvesterSystem { q, h, c, z })
}

/// Solves the Sylvester system through `(H^T (x) Q + C^T (x) I) vec(D) = vec(Z)`.
///
/// When `C` is a projector and `Z`, `H` live in its range (always the case
/// for assembled systems), the Kronecker matrix is singular along every `D`
/// with `D C = 0`. Those directions do not change the edit, so they are
/// pinned to zero by adding `(I - C)^T (x) I`, which yields the
/// minimum-norm solution with `D = D C`.
pub fn solve_sylvester_kron(sys: &SylvesterSystem, dim_cap: usize) -> Result<Matrix> {
    let d_m = sys.q.rows();
    let d_k = sys.h.rows();
    expect_shape(&sys.q, d_m, d_m, "Q")?;
    expect_shape(&sys.h, d_k, d_k, "H")?;
    expect_shape(&sys.c, d_k, d_k, "C")?;
    expect_shape(&sys.z, d_m, d_k, "Z")?;
    let n = d_m * d_k;
    if n > dim_cap {
        return Err(Error::ComplexityLimit {
            what: "Kronecker system dimension d_m*d_k",
            required: n,
            cap: dim_cap,
        });
    }
    let cap = n * n;
    let eye_m = Matrix::identity(d_m);
    let mut k =
        &kronecker_capped(&sys.h.transpose(), &sys.q, cap)? + &kronecker_capped(&sys.c.transpose(), &eye_m, cap)?;
    if deflatable(sys) {
        let complement = &Matrix::identity(d_k) - &sys.c;
        k = &k + &kronecker_capped(&complement.transpose(), &eye_m, cap)?;
    }
    let rhs = vectorize(&sys.z).into_dmatrix();
    let kd = k.into_dmatrix();
    let sol = match Cholesky::new(kd.clone()) {
        Some(ch) => ch.solve(&rhs),
        None => LU::new(kd)
            .solve(&rhs)
            .ok_or_else(|| Error::numerical(format!("Kronecker system of size {n} is singular")))?,
    };
    let d = unvectorize(&Matrix::from_dmatrix(sol)?, d_m, d_k)?;
    let res = sys.residual(&d).frobenius_norm();
    let bound = 1e-8 * sys.z.frobenius_norm().max(1.0);
    if !(res <= bound) {
        return Err(Error::numerical(format!(
            "Kronecker solve residual {res:.3e} exceeds {bound:.3e}"
        )));
    }
    Ok(d)
}

fn deflatable(sys: &SylvesterSystem) -> bool {
    let c = &sys.c;
    let scale = c.frobenius_norm().max(1.0);
    let complement = &Matrix::identity(c.rows()) - c;
    let idempotent = (&c.matmul(c) - c).frobenius_norm() <= 1e-10 * scale;
    let z_in_range = sys.z.matmul(&complement).frobenius_norm() <= 1e-10 * sys.z.frobenius_norm().max(1e-300);
    let h_in_range = sys.h.matmul(&complement).frobenius_norm() <= 1e-10 * sys.h.frobenius_norm().max(1e-300);
    idempotent && z_in_range && h_in_range
}

/// Additive objective evaluated on `D` with precomputed products.
pub struct AdditiveObjective<'a> {
    sets: &'a KnowledgeSets,
    p_m: &'a Matrix,
    c: Matrix,
    /// `P_m K_f`
    pk: Matrix,
    /// `W K_f`
    wk: Matrix,
}

impl<'a> AdditiveObjective<'a> {
    pub fn new(w: &Matrix, sets: &'a KnowledgeSets, p_m: &'a Matrix) -> Result<Self> {
        check_inputs(w, sets, p_m)?;
        Ok(AdditiveObjective {
            sets,
            p_m,
            c: p_m.matmul_t(p_m),
            pk: p_m.matmul(sets.k_f()),
            wk: w.matmul(sets.k_f()),
        })
    }

    /// `(W + D P_m) K_f`
    fn edited_outputs(&self, d: &Matrix) -> Matrix {
        &self.wk + &d.matmul(&self.pk)
    }
}

impl SmoothObjective for AdditiveObjective<'_> {
    fn value(&self, d: &Matrix) -> f64 {
        let out = self.edited_outputs(d);
        self.sets.m_f().t_matmul(&out).frobenius_sq()
            + (&out - self.sets.m_n()).frobenius_sq()
            + d.matmul(self.p_m).frobenius_sq()
    }

    fn gradient(&self, d: &Matrix) -> Matrix {
        let out = self.edited_outputs(d);
        let q_out = &self.sets.m_f().matmul(&self.sets.m_f().t_matmul(&out)) + &out;
        (&(&q_out - self.sets.m_n()).matmul_t(&self.pk) + &d.matmul(&self.c)).scale(2.0)
    }
}

pub fn additive_objective(d: &Matrix, w: &Matrix, sets: &KnowledgeSets, p_m: &Matrix) -> Result<f64> {
    expect_shape(d, w.rows(), w.cols(), "D")?;
    Ok(AdditiveObjective::new(w, sets, p_m)?.value(d))
}

/// `2 [Q (W + D P_m) K_f K_f^T P_m^T - M_n K_f^T P_m^T + D P_m P_m^T]`
pub fn objective_gradient(d: &Matrix, w: &Matrix, sets: &KnowledgeSets, p_m: &Matrix) -> Result<Matrix> {
    expect_shape(d, w.rows(), w.cols(), "D")?;
    Ok(AdditiveObjective::new(w, sets, p_m)?.gradient(d))
}

#[derive(Clone, Debug)]
pub struct GdSolution {
    pub d_tilde: Matrix,
    pub objective: f64,
    pub iters: usize,
    pub final_grad_norm: f64,
    pub converged: bool,
    pub trace: Vec<f64>,
}

pub fn solve_gd(w: &Matrix, sets: &KnowledgeSets, p_m: &Matrix, cfg: &GdConfig) -> Result<GdSolution> {
    solve_gd_from(&Matrix::zeros(w.rows(), w.cols()), w, sets, p_m, cfg)
}

pub fn solve_gd_from(
    init: &Matrix,
    w: &Matrix,
    sets: &KnowledgeSets,
    p_m: &Matrix,
    cfg: &GdConfig,
) -> Result<GdSolution> {
    expect_shape(init, w.rows(), w.cols(), "initial D")?;
    let obj = AdditiveObjective::new(w, sets, p_m)?;
    let res = minimize(&obj, init, cfg)?;
    if !res.converged {
        log::warn!(
            "additive GD stopped after {} steps with |grad| = {:.3e}",
            res.iters,
            res.grad_norm
        );
    }
    Ok(GdSolution {
        d_tilde: res.x,
        objective: res.objective,
        iters: res.iters,
        final_grad_norm: res.grad_norm,
        converged: res.converged,
        trace: res.trace,
    })
}

/// `W + D P_m`
pub fn apply_additive(w: &Matrix, d_tilde: &Matrix, p_m: &Matrix) -> Result<Matrix> {
    expect_shape(d_tilde, w.rows(), w.cols(), "D")?;
    expect_shape(p_m, w.cols(), w.cols(), "P_m")?;
    (w + &d_tilde.matmul(p_m)).ensure_finite("additive update")
}

#[derive(Clone, Debug)]
pub struct AdditiveEdit {
    pub d_tilde: Matrix,
    pub p_m: Matrix,
    pub w_new: Matrix,
    pub report: EditReport,
}

/// Runs one additive edit end to end with either solver.
pub fn additive_edit(
    w: &Matrix,
    sets: &KnowledgeSets,
    method: Method,
    eig_rel_tol: f64,
    gd: &GdConfig,
    dim_cap: usize,
) -> Result<AdditiveEdit> {
    let start = Instant::now();
    let p_m = retain_null_projector(sets.k_0(), eig_rel_tol)?;
    let sys = assemble_sylvester(w, sets, &p_m)?;
    let (d_tilde, summary) = match method {
        Method::AdditiveClosed => (solve_sylvester_kron(&sys, dim_cap)?, None),
        Method::AdditiveGd => {
            let sol = solve_gd(w, sets, &p_m, gd)?;
            let summary = GdSummary {
                iters: sol.iters,
                final_grad_norm: sol.final_grad_norm,
                converged: sol.converged,
            };
            (sol.d_tilde, Some(summary))
        }
        Method::Multiplicative => return Err(Error::validation("additive_edit called with the multiplicative method")),
    };
    let w_new = apply_additive(w, &d_tilde, &p_m)?;
    let wall_time_seconds = start.elapsed().as_secs_f64();

    let rank = projector_rank(&p_m)?;
    let mut warnings = Vec::new();
    if rank == 0 {
        warnings.push("retain projector P_m is zero (K_0 has full row rank); the edit is a no-op".into());
    }
    if let Some(s) = &summary {
        if !s.converged {
            warnings.push(format!("gradient descent did not converge in {} steps", s.iters));
        }
    }
    let report = EditReport {
        method,
        before: objective_terms(w, w, sets)?,
        after: objective_terms(&w_new, w, sets)?,
        projector_rank: rank,
        stationarity_residual: sylvester_relative_residual(&sys, &d_tilde),
        wall_time_seconds,
        ridge_applied: 0.0,
        gd: summary,
        warnings,
    };
    Ok(AdditiveEdit {
        d_tilde,
        p_m,
        w_new,
        report,
    })
}

/// `|Q D H + D C - Z| / max(1, |Z|)`
pub fn sylvester_relative_residual(sys: &SylvesterSystem, d: &Matrix) -> f64 {
    sys.residual(d).frobenius_norm() / sys.z.frobenius_norm().max(1.0)
}

/// Dense `(H^T (x) Q + C^T (x) I)` without the deflation term, for inspection.
pub fn kronecker_operator(sys: &SylvesterSystem, dim_cap: usize) -> Result<Matrix> {
    let n = sys.q.rows() * sys.h.rows();
    if n > dim_cap {
        return Err(Error::ComplexityLimit {
            what: "Kronecker system dimension d_m*d_k",
            required: n,
            cap: dim_cap,
        });
    }
    let eye = Matrix::identity(sys.q.rows());
    Ok(&kronecker_capped(&sys.h.transpose(), &sys.q, n * n)? + &kronecker_capped(&sys.c.transpose(), &eye, n * n)?)
}
