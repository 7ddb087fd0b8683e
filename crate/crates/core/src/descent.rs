//! Gradient descent with Armijo backtracking for smooth convex objectives
//! over matrices, optionally restricted to a linear subspace.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GdConfig {
    pub max_iters: usize,
    /// Stop once `|grad| <= grad_tol * (1 + |grad_0|)`.
    pub grad_tol: f64,
    /// Step shrink factor applied on each failed Armijo test.
    pub backtrack: f64,
    /// Armijo sufficient-decrease constant.
    pub sufficient_decrease: f64,
    /// Power iterations for the Lipschitz estimate that seeds each step.
    pub power_iters: usize,
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig {
            max_iters: 10_000,
            grad_tol: 1e-8,
            backtrack: 0.5,
            sufficient_decrease: 1e-4,
            power_iters: 30,
        }
    }
}

impl GdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::validation("gd.max_iters must be >= 1"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::validation("gd.grad_tol must be > 0"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::validation("gd.backtrack must lie in (0, 1)"));
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 1.0) {
            return Err(Error::validation("gd.sufficient_decrease must lie in (0, 1)"));
        }
        Ok(())
    }
}

pub trait SmoothObjective {
    fn value(&self, x: &Matrix) -> f64;
    fn gradient(&self, x: &Matrix) -> Matrix;
    /// Orthogonal projection onto the feasible subspace. Must be linear.
    fn project(&self, x: Matrix) -> Matrix {
        x
    }
}

#[derive(Clone, Debug)]
pub struct DescentResult {
    pub x: Matrix,
    pub objective: f64,
    /// Accepted steps.
    pub iters: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// Objective after each accepted step, starting with the initial point.
    pub trace: Vec<f64>,
}

const MAX_BACKTRACKS: usize = 60;

/// Largest-eigenvalue estimate of the (projected) Hessian, using gradient
/// differences as Hessian-vector products.
pub fn lipschitz_estimate(obj: &impl SmoothObjective, x: &Matrix, iters: usize) -> f64 {
    let g0 = obj.gradient(x);
    let (r, c) = x.shape();
    let mut v = obj.project(Matrix::from_fn(r, c, |i, j| 1.0 + 0.1 * ((i * 7 + j * 13) % 5) as f64));
    let mut estimate = 0.0;
    for _ in 0..iters.max(1) {
        let n = v.frobenius_norm();
        if !(n > 0.0) {
            break;
        }
        v = v.scale(1.0 / n);
        let hv = obj.project(&obj.gradient(&(x + &v)) - &g0);
        estimate = hv.frobenius_norm();
        v = hv;
    }
    if estimate > 0.0 && estimate.is_finite() {
        estimate
    } else {
        1.0
    }
}

pub fn minimize(obj: &impl SmoothObjective, x0: &Matrix, cfg: &GdConfig) -> Result<DescentResult> {
    cfg.validate()?;
    let mut x = obj.project(x0.clone());
    let mut f = obj.value(&x);
    if !f.is_finite() {
        return Err(Error::numerical("objective is not finite at the starting point"));
    }
    let mut g = obj.project(obj.gradient(&x));
    let g0 = g.frobenius_norm();
    let tol = cfg.grad_tol * (1.0 + g0);
    let lipschitz = lipschitz_estimate(obj, &x, cfg.power_iters);
    let step0 = 1.0 / lipschitz;

    let mut trace = vec![f];
    let mut best = (f, x.clone(), g0);
    let mut iters = 0;
    let mut converged = g0 <= tol;

    while !converged && iters < cfg.max_iters {
        let gg = g.frobenius_sq();
        let mut t = step0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let cand = obj.project(&x - &g.scale(t));
            let fc = obj.value(&cand);
            let predicted = cfg.sufficient_decrease * t * gg;
            // Below the resolution of f the Armijo test is decided by rounding.
            let unresolved = t * gg <= 8.0 * f64::EPSILON * f.abs();
            if fc <= f - predicted || (unresolved && fc <= f + 8.0 * f64::EPSILON * f.abs()) {
                accepted = Some((cand, fc));
                break;
            }
            t *= cfg.backtrack;
        }
        let Some((cand, fc)) = accepted else {
            log::debug!("descent stalled after {iters} steps, |g| = {:.3e}", g.frobenius_norm());
            break;
        };
        x = cand;
        f = fc;
        g = obj.project(obj.gradient(&x));
        iters += 1;
        trace.push(f);
        let gn = g.frobenius_norm();
        if f < best.0 || (f == best.0 && gn < best.2) {
            best = (f, x.clone(), gn);
        }
        converged = gn <= tol;
    }
    let final_gn = g.frobenius_norm();
    // The last iterate is returned when it is converged, otherwise the best seen.
    let (objective, x, grad_norm) = if converged || f <= best.0 {
        (f, x, final_gn)
    } else {
        best
    };
    Ok(DescentResult {
        x,
        objective,
        iters,
        grad_norm,
        converged,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `f(X) = |A X - B|^2`
    struct LeastSquares {
        a: Matrix,
        b: Matrix,
    }

    impl SmoothObjective for LeastSquares {
        fn value(&self, x: &Matrix) -> f64 {
            (&self.a.matmul(x) - &self.b).frobenius_sq()
        }
        fn gradient(&self, x: &Matrix) -> Matrix {
            self.a.t_matmul(&(&self.a.matmul(x) - &self.b)).scale(2.0)
        }
    }

    fn problem() -> LeastSquares {
        LeastSquares {
            a: Matrix::from_row_slice(3, 2, &[2.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap(),
            b: Matrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]).unwrap(),
        }
    }

    #[test]
    fn converges_to_least_squares_solution() {
        let p = problem();
        let res = minimize(&p, &Matrix::zeros(2, 1), &GdConfig::default()).unwrap();
        assert!(res.converged);
        // normal equations: [[5,1],[1,2]] x = [5,5]
        let want = [5.0 / 9.0, 20.0 / 9.0];
        assert!((res.x.get(0, 0) - want[0]).abs() < 1e-7);
        assert!((res.x.get(1, 0) - want[1]).abs() < 1e-7);
        for w in res.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-14 * w[0].abs());
        }
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let cfg = GdConfig {
            max_iters: 1,
            ..GdConfig::default()
        };
        let res = minimize(&problem(), &Matrix::zeros(2, 1), &cfg).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iters, 1);
    }

    #[test]
    fn lipschitz_estimate_matches_top_eigenvalue() {
        // Hessian 2 A^T A has eigenvalues 7 +- sqrt(13)
        let l = lipschitz_estimate(&problem(), &Matrix::zeros(2, 1), 100);
        assert!((l - (7.0 + 13f64.sqrt())).abs() < 1e-8, "{l}");
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = GdConfig {
            grad_tol: 0.0,
            ..GdConfig::default()
        };
        assert!(minimize(&problem(), &Matrix::zeros(2, 1), &cfg).is_err());
    }
}
