//! Self-check suite behind `zul verify`: projector identities, the rank law,
//! closed form against the oracle, Sylvester residuals and agreement,
//! retain preservation and gradient checks on seeded random instances.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::additive::{
    additive_objective, apply_additive, assemble_sylvester, objective_gradient, retain_null_projector, solve_gd,
    solve_sylvester_kron, DEFAULT_DIM_CAP, DEFAULT_EIG_REL_TOL,
};
use crate::descent::GdConfig;
use crate::error::{Error, Result};
use crate::instance::{random_instance, Instance, InstanceSpec};
use crate::kernel::{matrix_rank, projector_rank, DEFAULT_REL_TOL};
use crate::matrix::Matrix;
use crate::multiplicative::{closed_form_update, forget_projector};
use crate::oracle::{finite_diff_gradient, gd_multiplicative_oracle, oracle_gd_config};
use crate::rng::{stream, Stream};

/// Deliberate corruption used to prove the suite can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Perturbs the forget projector before it is checked.
    CorruptProjector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub trials: usize,
    /// Largest observed value of the checked quantity.
    pub worst: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub trials: usize,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn failed_checks(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Json {
            path: path.into(),
            source: e,
        })?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

struct Check {
    name: &'static str,
    tolerance: f64,
    worst: f64,
    trials: usize,
}

impl Check {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Check {
            name,
            tolerance,
            worst: 0.0,
            trials: 0,
        }
    }

    fn record(&mut self, value: f64) {
        self.trials += 1;
        // NaN must fail the check
        if !(value <= self.worst) {
            self.worst = if value.is_nan() { f64::INFINITY } else { value };
        }
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            name: self.name.to_string(),
            passed: self.trials > 0 && self.worst <= self.tolerance,
            trials: self.trials,
            worst: self.worst,
            tolerance: self.tolerance,
        }
    }
}

fn trial_instance(seed: u64, trial: usize, dims: &[usize], additive: bool) -> Result<Instance> {
    let mut rng = stream(seed, Stream::Instance, (1 << 40) + trial as u64);
    let d = dims[rng.random_range(0..dims.len())];
    let n_forget = rng.random_range(1..d);
    let n_utility = if additive {
        rng.random_range(1..d)
    } else {
        rng.random_range(d..=3 * d)
    };
    random_instance(&InstanceSpec {
        seed: seed.wrapping_mul(1_000_003).wrapping_add(trial as u64),
        d_k: d,
        d_m: d,
        n_forget,
        n_utility,
    })
}

pub fn run_verify(trials: usize, seed: u64, fault: Option<Fault>) -> Result<VerifyReport> {
    if trials == 0 {
        return Err(Error::validation("trials: must be >= 1"));
    }
    let mut projector = Check::new("projector_identities", 1e-10);
    let mut rank_law = Check::new("rank_law", 0.0);
    let mut optimality = Check::new("closed_form_vs_oracle", 1e-6);
    let mut stationarity = Check::new("closed_form_stationarity", 1e-8);
    let mut sylvester = Check::new("sylvester_residual", 1e-8);
    let mut agreement = Check::new("kron_vs_gd", 1e-5);
    let mut exactness = Check::new("retain_preservation", 1e-10);
    let mut gradient = Check::new("gradient_vs_finite_differences", 1e-4);

    for t in 0..trials {
        let inst = trial_instance(seed, t, &[8, 16, 32], false)?;
        let (sets, w) = (&inst.sets, &inst.w);
        let mut p = forget_projector(sets, DEFAULT_REL_TOL)?;
        if fault == Some(Fault::CorruptProjector) {
            p = &p + &Matrix::from_fn(p.rows(), p.cols(), |i, j| if i == 0 && j == 0 { 1e-3 } else { 0.0 });
        }
        let m_ft = sets.m_f().transpose();
        projector.record((&p - &p.transpose()).frobenius_norm());
        projector.record((&p.matmul(&p) - &p).frobenius_norm());
        projector.record(m_ft.matmul(&p).frobenius_norm() / sets.m_f().frobenius_norm().max(1.0));
        let expected = w.rows() - matrix_rank(&m_ft, DEFAULT_REL_TOL)?;
        rank_law.record((projector_rank(&p)? as f64 - expected as f64).abs());

        let small = trial_instance(seed, t, &[6, 8, 12, 16, 24], false)?;
        let edit = closed_form_update(&small.w, &small.sets, DEFAULT_REL_TOL, crate::kernel::DEFAULT_RIDGE)?;
        let oracle = gd_multiplicative_oracle(&small.w, &small.sets, &oracle_gd_config())?;
        let closed = edit.report.after.total();
        optimality.record((closed - oracle.objective_value) / (1.0 + oracle.objective_value));
        stationarity.record(edit.report.stationarity_residual);

        let add = trial_instance(seed, t, &[6, 8, 12, 16], true)?;
        let p_m = retain_null_projector(add.sets.k_0(), DEFAULT_EIG_REL_TOL)?;
        rank_law.record(
            (projector_rank(&p_m)? as f64 - (add.w.cols() - matrix_rank(add.sets.k_0(), DEFAULT_REL_TOL)?) as f64)
                .abs(),
        );
        let sys = assemble_sylvester(&add.w, &add.sets, &p_m)?;
        let kron = solve_sylvester_kron(&sys, DEFAULT_DIM_CAP)?;
        sylvester.record(sys.residual(&kron).frobenius_norm() / sys.z.frobenius_norm().max(1.0));
        let gd = solve_gd(&add.w, &add.sets, &p_m, &GdConfig::default())?;
        agreement.record(if gd.converged {
            (&kron - &gd.d_tilde).frobenius_norm()
        } else {
            f64::INFINITY
        });
        let wk0 = add.w.matmul(add.sets.k_0());
        for d in [&kron, &gd.d_tilde] {
            let w_new = apply_additive(&add.w, d, &p_m)?;
            let drift = (&w_new.matmul(add.sets.k_0()) - &wk0).frobenius_norm();
            exactness.record(drift / wk0.frobenius_norm().max(f64::MIN_POSITIVE));
        }

        let tiny = trial_instance(seed, t, &[3, 4, 5, 6], true)?;
        let p_m = retain_null_projector(tiny.sets.k_0(), DEFAULT_EIG_REL_TOL)?;
        let point = Matrix::from_fn(tiny.w.rows(), tiny.w.cols(), |i, j| ((i * 7 + j * 3 + t) as f64).sin());
        let analytic = objective_gradient(&point, &tiny.w, &tiny.sets, &p_m)?;
        let fd = finite_diff_gradient(
            |x| additive_objective(x, &tiny.w, &tiny.sets, &p_m).unwrap_or(f64::NAN),
            &point,
            1e-6,
        );
        gradient.record(max_entry_error(&analytic, &fd));
    }

    let checks: Vec<CheckResult> = [
        projector,
        rank_law,
        optimality,
        stationarity,
        sylvester,
        agreement,
        exactness,
        gradient,
    ]
    .into_iter()
    .map(Check::finish)
    .collect();
    Ok(VerifyReport {
        seed,
        trials,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

/// `max_ij |a - b| / max_ij |a|`, i.e. entrywise error relative to the
/// gradient's scale. Zero when both vanish.
pub fn max_entry_error(analytic: &Matrix, approx: &Matrix) -> f64 {
    let scale = analytic.max_abs();
    let err = (analytic - approx).max_abs();
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_a_few_trials() {
        let report = run_verify(3, 1, None).unwrap();
        assert!(report.passed, "failed: {:?}", report.failed_checks());
        assert!(report.checks.iter().all(|c| c.trials >= 3));
    }

    #[test]
    fn injected_fault_is_caught_by_name() {
        let report = run_verify(1, 1, Some(Fault::CorruptProjector)).unwrap();
        assert!(!report.passed);
        assert!(report.failed_checks().contains(&"projector_identities"));
    }

    #[test]
    fn zero_trials_is_invalid() {
        assert!(matches!(run_verify(0, 1, None), Err(Error::Validation(_))));
    }
}
