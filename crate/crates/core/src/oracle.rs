//! Brute-force verifiers for the closed forms.
//!
//! The multiplicative oracle runs projected gradient descent on the raw
//! objective over `D` with `D = P D`, evaluating the objective through the
//! same term evaluator the editors report with.

use crate::descent::{minimize, GdConfig, SmoothObjective};
use crate::error::Result;
use crate::facts::KnowledgeSets;
use crate::kernel::DEFAULT_REL_TOL;
use crate::matrix::Matrix;
use crate::multiplicative::{forget_projector, objective_terms, ObjectiveTerms};

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub objective_value: f64,
    pub solution: Matrix,
    pub iters: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

/// Tight settings used when the oracle certifies a closed form.
pub fn oracle_gd_config() -> GdConfig {
    GdConfig {
        max_iters: 200_000,
        grad_tol: 1e-10,
        ..GdConfig::default()
    }
}

struct MultiplicativeProblem<'a, F> {
    w: &'a Matrix,
    sets: &'a KnowledgeSets,
    p: Matrix,
    wk_f: Matrix,
    wk_0: Matrix,
    terms: F,
}

impl<F> SmoothObjective for MultiplicativeProblem<'_, F>
where
    F: Fn(&Matrix, &Matrix, &KnowledgeSets) -> Result<ObjectiveTerms>,
{
    fn value(&self, d: &Matrix) -> f64 {
        match (self.terms)(&d.matmul(self.w), self.w, self.sets) {
            Ok(t) => t.total(),
            Err(_) => f64::NAN,
        }
    }

    fn gradient(&self, d: &Matrix) -> Matrix {
        let m_f = self.sets.m_f();
        let out_f = d.matmul(&self.wk_f);
        let zero = m_f.matmul(&m_f.t_matmul(&out_f)).matmul_t(&self.wk_f);
        let forget = (&out_f - self.sets.m_n()).matmul_t(&self.wk_f);
        let utility = (&d.matmul(&self.wk_0) - self.sets.m_0()).matmul_t(&self.wk_0);
        let reg = (&d.matmul(self.w) - self.w).matmul_t(self.w);
        (&(&(&zero + &forget) + &utility) + &reg).scale(2.0)
    }

    fn project(&self, d: Matrix) -> Matrix {
        self.p.matmul(&d)
    }
}

pub fn gd_multiplicative_oracle(w: &Matrix, sets: &KnowledgeSets, cfg: &GdConfig) -> Result<OracleResult> {
    gd_multiplicative_oracle_with(w, sets, cfg, objective_terms)
}

/// Same as [`gd_multiplicative_oracle`] with a caller-supplied term evaluator.
pub fn gd_multiplicative_oracle_with<F>(
    w: &Matrix,
    sets: &KnowledgeSets,
    cfg: &GdConfig,
    terms: F,
) -> Result<OracleResult>
where
    F: Fn(&Matrix, &Matrix, &KnowledgeSets) -> Result<ObjectiveTerms>,
{
    sets.check_weight(w)?;
    let p = forget_projector(sets, DEFAULT_REL_TOL)?;
    let problem = MultiplicativeProblem {
        w,
        sets,
        wk_f: w.matmul(sets.k_f()),
        wk_0: w.matmul(sets.k_0()),
        p,
        terms,
    };
    let start = problem.p.clone();
    let res = minimize(&problem, &start, cfg)?;
    if !res.converged {
        log::warn!(
            "oracle GD stopped after {} steps with |grad| = {:.3e}",
            res.iters,
            res.grad_norm
        );
    }
    Ok(OracleResult {
        objective_value: res.objective,
        solution: res.x,
        iters: res.iters,
        grad_norm: res.grad_norm,
        converged: res.converged,
    })
}

/// Central differences with per-entry step `eps * (1 + |x_ij|)`.
pub fn finite_diff_gradient(f: impl Fn(&Matrix) -> f64, point: &Matrix, eps: f64) -> Matrix {
    let (rows, cols) = point.shape();
    let mut grad = Matrix::zeros(rows, cols);
    let mut x = point.clone();
    for j in 0..cols {
        for i in 0..rows {
            let x0 = point.get(i, j);
            let h = eps * (1.0 + x0.abs());
            x.set(i, j, x0 + h);
            let up = f(&x);
            x.set(i, j, x0 - h);
            let down = f(&x);
            x.set(i, j, x0);
            grad.set(i, j, (up - down) / (2.0 * h));
        }
    }
    grad
}

/// Relative objective gap `(candidate - reference) / (1 + |reference|)`.
pub fn relative_gap(candidate: f64, reference: f64) -> f64 {
    (candidate - reference) / (1.0 + reference.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{random_instance, InstanceSpec};
    use crate::multiplicative::closed_form_update;

    fn spec(seed: u64, d: usize, n_f: usize, n_0: usize) -> InstanceSpec {
        InstanceSpec {
            seed,
            d_k: d,
            d_m: d,
            n_forget: n_f,
            n_utility: n_0,
        }
    }

    #[test]
    fn identity_instance_has_zero_minimum() {
        let inst = random_instance(&spec(1, 6, 0, 10)).unwrap();
        let res = gd_multiplicative_oracle(&inst.w, &inst.sets, &oracle_gd_config()).unwrap();
        assert!(res.converged);
        assert!(res.objective_value <= 1e-20);
        assert!((&res.solution - &Matrix::identity(6)).frobenius_norm() <= 1e-12);
    }

    #[test]
    fn agrees_with_the_closed_form() {
        let inst = random_instance(&spec(7, 16, 3, 24)).unwrap();
        let res = gd_multiplicative_oracle(&inst.w, &inst.sets, &oracle_gd_config()).unwrap();
        assert!(res.converged, "grad {:e} after {}", res.grad_norm, res.iters);
        let edit = closed_form_update(&inst.w, &inst.sets, DEFAULT_REL_TOL, 1e-8).unwrap();
        let closed = edit.report.after.total();
        assert!(closed <= res.objective_value + 1e-6 * (1.0 + res.objective_value));
        assert!(relative_gap(res.objective_value, closed).abs() <= 1e-6);
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let inst = random_instance(&spec(7, 8, 2, 12)).unwrap();
        let cfg = GdConfig {
            max_iters: 1,
            ..oracle_gd_config()
        };
        let res = gd_multiplicative_oracle(&inst.w, &inst.sets, &cfg).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iters, 1);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let inst = random_instance(&spec(3, 5, 2, 4)).unwrap();
        let problem = MultiplicativeProblem {
            w: &inst.w,
            sets: &inst.sets,
            p: Matrix::identity(5),
            wk_f: inst.w.matmul(inst.sets.k_f()),
            wk_0: inst.w.matmul(inst.sets.k_0()),
            terms: objective_terms,
        };
        let d = Matrix::from_fn(5, 5, |i, j| ((i + 2 * j) as f64 * 0.71).cos());
        let fd = finite_diff_gradient(|x| problem.value(x), &d, 1e-6);
        let g = problem.gradient(&d);
        assert!((&g - &fd).frobenius_norm() <= 1e-6 * g.frobenius_norm());
    }

    #[test]
    fn fd_of_squared_norm_and_constant() {
        let x = Matrix::from_fn(3, 4, |i, j| i as f64 - 1.5 * j as f64);
        let g = finite_diff_gradient(|m| m.frobenius_sq(), &x, 1e-6);
        assert!((&g - &x.scale(2.0)).frobenius_norm() <= 1e-6 * x.frobenius_norm() * 2.0);
        let c = finite_diff_gradient(|_| 3.25, &x, 1e-6);
        assert_eq!(c, Matrix::zeros(3, 4));
    }

    #[test]
    fn injected_evaluator_is_used() {
        let inst = random_instance(&spec(2, 4, 1, 6)).unwrap();
        let calls = std::cell::Cell::new(0usize);
        let counting = |a: &Matrix, b: &Matrix, s: &KnowledgeSets| {
            calls.set(calls.get() + 1);
            objective_terms(a, b, s)
        };
        let res = gd_multiplicative_oracle_with(&inst.w, &inst.sets, &GdConfig::default(), counting).unwrap();
        assert!(res.converged);
        assert!(calls.get() > res.iters);
    }
}
