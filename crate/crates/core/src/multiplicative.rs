//! Few-shot multiplicative editor.
//!
//! The edited layer is `D* W` where `D*` is restricted to the null space of
//! `M_f^T` through the projector `P = I - V V^T`, so every edited output is
//! orthogonal to the original outputs of the forget set. Among such `D`,
//! `D*` minimizes forget, utility and weight-drift terms:
//!
//! ```text
//! D* = P (A + W) W^T (W (B + I) W^T)^{-1}
//! A  = M_n K_f^T + M_0 K_0^T
//! B  = K_f K_f^T + K_0 K_0^T
//! ```

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::facts::KnowledgeSets;
use crate::kernel::{projector_rank, row_null_projector, solve_right_sym};
use crate::matrix::{expect_shape, Matrix};

/// Squared Frobenius norms of the four objective terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    /// `|M_f^T W_eff K_f|^2`
    pub zero: f64,
    /// `|W_eff K_f - M_n|^2`
    pub forget: f64,
    /// `|W_eff K_0 - M_0|^2`
    pub utility: f64,
    /// `|W_eff - W|^2`
    pub reg: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.zero + self.forget + self.utility + self.reg
    }
}

pub fn objective_terms(w_eff: &Matrix, w_orig: &Matrix, sets: &KnowledgeSets) -> Result<ObjectiveTerms> {
    sets.check_weight(w_eff)?;
    expect_shape(w_orig, w_eff.rows(), w_eff.cols(), "original W")?;
    let out_f = w_eff.matmul(sets.k_f());
    Ok(ObjectiveTerms {
        zero: sets.m_f().t_matmul(&out_f).frobenius_sq(),
        forget: (&out_f - sets.m_n()).frobenius_sq(),
        utility: (&w_eff.matmul(sets.k_0()) - sets.m_0()).frobenius_sq(),
        reg: (w_eff - w_orig).frobenius_sq(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "multiplicative")]
    Multiplicative,
    #[serde(rename = "additive-closed")]
    AdditiveClosed,
    #[serde(rename = "additive-gd")]
    AdditiveGd,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Multiplicative => "multiplicative",
            Method::AdditiveClosed => "additive-closed",
            Method::AdditiveGd => "additive-gd",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multiplicative" => Ok(Method::Multiplicative),
            "additive-closed" => Ok(Method::AdditiveClosed),
            "additive-gd" => Ok(Method::AdditiveGd),
            other => Err(Error::validation(format!(
                "unknown method {other:?} (expected multiplicative, additive-closed or additive-gd)"
            ))),
        }
    }
}

/// Iteration statistics attached to gradient-based edits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdSummary {
    pub iters: usize,
    pub final_grad_norm: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditReport {
    pub method: Method,
    pub before: ObjectiveTerms,
    pub after: ObjectiveTerms,
    /// Rank of the projector the method constrains its update with.
    pub projector_rank: usize,
    pub stationarity_residual: f64,
    pub wall_time_seconds: f64,
    /// Absolute diagonal ridge used by the normal-equation solve (0 if none).
    #[serde(default)]
    pub ridge_applied: f64,
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    pub gd: Option<GdSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct MultiplicativeEdit {
    pub d_star: Matrix,
    pub w_new: Matrix,
    pub projector: Matrix,
    pub report: EditReport,
}

/// Forget-set projector `P` with `M_f^T P = 0`; identity for an empty set.
pub fn forget_projector(sets: &KnowledgeSets, rel_tol: f64) -> Result<Matrix> {
    row_null_projector(&sets.m_f().transpose(), rel_tol)
}

/// `(A + W) W^T` and `W (B + I) W^T`, the two sides of the normal equation.
fn normal_equation(w: &Matrix, sets: &KnowledgeSets) -> (Matrix, Matrix) {
    let a = &sets.m_n().matmul_t(sets.k_f()) + &sets.m_0().matmul_t(sets.k_0());
    let b_plus_i = &(&sets.k_f().matmul_t(sets.k_f()) + &sets.k_0().matmul_t(sets.k_0())) + &Matrix::identity(w.cols());
    let rhs = (&a + w).matmul_t(w);
    let lhs = w.matmul(&b_plus_i).matmul_t(w);
    (rhs, lhs.symmetrized())
}

pub fn closed_form_update(w: &Matrix, sets: &KnowledgeSets, rel_tol: f64, ridge: f64) -> Result<MultiplicativeEdit> {
    sets.check_weight(w)?;
    let start = Instant::now();
    let p = forget_projector(sets, rel_tol)?;
    let (rhs, lhs) = normal_equation(w, sets);
    let solve = solve_right_sym(&rhs, &lhs, ridge)?;
    // P applied last keeps M_f^T D* at rounding level regardless of the solve.
    let d_star = p.matmul(&solve.x).ensure_finite("closed-form update")?;
    let w_new = d_star.matmul(w);
    let wall_time_seconds = start.elapsed().as_secs_f64();

    let stationarity = stationarity_residual(&d_star, w, sets, &p)?;
    let rank_p = projector_rank(&p)?;
    let mut warnings = Vec::new();
    if solve.ridge > 0.0 {
        warnings.push(format!(
            "W (B + I) W^T is rank deficient; solved with ridge {:.3e}",
            solve.ridge
        ));
    }
    let report = EditReport {
        method: Method::Multiplicative,
        before: objective_terms(w, w, sets)?,
        after: objective_terms(&w_new, w, sets)?,
        projector_rank: rank_p,
        stationarity_residual: stationarity,
        wall_time_seconds,
        ridge_applied: solve.ridge,
        gd: None,
        warnings,
    };
    Ok(MultiplicativeEdit {
        d_star,
        w_new,
        projector: p,
        report,
    })
}

/// Relative norm of the projected gradient
/// `P [(D W K_f - M_n)(W K_f)^T + (D W K_0 - M_0)(W K_0)^T + (D W - W) W^T]`.
///
/// Normalized by `|P (A + W) W^T| + |D| |W (B + I) W^T|`, the magnitudes of the
/// two sides of the stationarity equation.
pub fn stationarity_residual(d: &Matrix, w: &Matrix, sets: &KnowledgeSets, p: &Matrix) -> Result<f64> {
    sets.check_weight(w)?;
    let d_m = w.rows();
    expect_shape(d, d_m, d_m, "D")?;
    expect_shape(p, d_m, d_m, "P")?;
    let wk_f = w.matmul(sets.k_f());
    let wk_0 = w.matmul(sets.k_0());
    let dw = d.matmul(w);
    let inner = &(&(&d.matmul(&wk_f) - sets.m_n()).matmul_t(&wk_f) + &(&d.matmul(&wk_0) - sets.m_0()).matmul_t(&wk_0))
        + &(&dw - w).matmul_t(w);
    let residual = p.matmul(&inner).frobenius_norm();
    let (rhs, lhs) = normal_equation(w, sets);
    let scale = p.matmul(&rhs).frobenius_norm() + d.frobenius_norm() * lhs.frobenius_norm();
    Ok(if scale > 0.0 { residual / scale } else { residual })
}
