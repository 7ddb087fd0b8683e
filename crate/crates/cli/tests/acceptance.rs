//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use serde_json::Value;
use zul_core::additive::{
    additive_objective, apply_additive, assemble_sylvester, objective_gradient, retain_null_projector, solve_gd,
    solve_sylvester_kron, DEFAULT_DIM_CAP, DEFAULT_EIG_REL_TOL,
};
use zul_core::descent::GdConfig;
use zul_core::experiment::{run_pipeline, ExperimentConfig};
use zul_core::instance::{random_instance, Instance, InstanceSpec};
use zul_core::kernel::{matrix_rank, projector_rank, DEFAULT_REL_TOL, DEFAULT_RIDGE};
use zul_core::multiplicative::{closed_form_update, forget_projector, objective_terms, Method};
use zul_core::oracle::{finite_diff_gradient, gd_multiplicative_oracle, oracle_gd_config};
use zul_core::verify::max_entry_error;
use zul_core::{Error, Matrix};

type Outcome = Result<String, String>;

fn instance(seed: u64, d_k: usize, d_m: usize, n_forget: usize, n_utility: usize) -> Instance {
    random_instance(&InstanceSpec {
        seed,
        d_k,
        d_m,
        n_forget,
        n_utility,
    })
    .expect("instance")
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    if elapsed.as_secs_f64() < limit_s {
        Ok(())
    } else {
        Err(format!("took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64()))
    }
}

/// Null-space law: `|M_f^T P| <= 1e-10 |M_f|`, `rank(P) = d_m - rank(M_f^T)`.
fn null_space_law() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let dims = [8usize, 16, 32];
    for t in 0..100u64 {
        let d_m = dims[(t % 3) as usize];
        let n_f = 1 + (t as usize * 7) % (d_m - 1);
        let inst = instance(1000 + t, d_m, d_m, n_f, d_m);
        let p = forget_projector(&inst.sets, DEFAULT_REL_TOL).map_err(|e| e.to_string())?;
        let m_f = inst.sets.m_f();
        let ratio = m_f.t_matmul(&p).frobenius_norm() / m_f.frobenius_norm();
        worst = worst.max(ratio);
        if !(ratio <= 1e-10) {
            return Err(format!("instance {t}: |M_f^T P| / |M_f| = {ratio:.3e}"));
        }
        let rank_p = projector_rank(&p).map_err(|e| e.to_string())?;
        let rank_m = matrix_rank(&m_f.transpose(), DEFAULT_REL_TOL).map_err(|e| e.to_string())?;
        if rank_p != d_m - rank_m {
            return Err(format!("instance {t}: rank(P) = {rank_p}, expected {}", d_m - rank_m));
        }
    }
    within(start.elapsed(), 5.0)?;
    Ok(format!("100 instances, worst ratio {worst:.2e}"))
}

/// Closed form is no worse than the oracle and satisfies stationarity.
fn closed_form_optimality() -> Outcome {
    let start = Instant::now();
    let dims = [4usize, 8, 12, 16, 20, 24];
    let (mut worst_gap, mut worst_res) = (f64::NEG_INFINITY, 0.0f64);
    for t in 0..20u64 {
        let d = dims[(t % 6) as usize];
        let n_f = 1 + (t as usize * 5) % (d - 1);
        let n_0 = d + (t as usize * 3) % (2 * d);
        let inst = instance(2000 + t, d, d, n_f, n_0);
        let edit =
            closed_form_update(&inst.w, &inst.sets, DEFAULT_REL_TOL, DEFAULT_RIDGE).map_err(|e| e.to_string())?;
        let oracle = gd_multiplicative_oracle(&inst.w, &inst.sets, &oracle_gd_config()).map_err(|e| e.to_string())?;
        if !oracle.converged {
            return Err(format!(
                "instance {t}: oracle did not converge (|g| = {:.3e})",
                oracle.grad_norm
            ));
        }
        let closed = objective_terms(&edit.w_new, &inst.w, &inst.sets)
            .map_err(|e| e.to_string())?
            .total();
        let bound = oracle.objective_value + 1e-6 * (1.0 + oracle.objective_value);
        worst_gap = worst_gap.max((closed - oracle.objective_value) / (1.0 + oracle.objective_value));
        worst_res = worst_res.max(edit.report.stationarity_residual);
        if !(closed <= bound) {
            return Err(format!(
                "instance {t}: closed {closed:.12e} > oracle {:.12e}",
                oracle.objective_value
            ));
        }
        if !(edit.report.stationarity_residual <= 1e-8) {
            return Err(format!(
                "instance {t}: stationarity residual {:.3e}",
                edit.report.stationarity_residual
            ));
        }
    }
    within(start.elapsed(), 60.0)?;
    Ok(format!(
        "20 instances, worst relative gap {worst_gap:.2e}, worst stationarity {worst_res:.2e}"
    ))
}

/// Retained outputs are unchanged by both additive solvers.
fn additive_exactness() -> Outcome {
    let start = Instant::now();
    let dims = [4usize, 6, 8, 12, 16, 24];
    let mut worst = 0.0f64;
    for t in 0..20u64 {
        let d = dims[(t % 6) as usize];
        let n_0 = 1 + (t as usize * 5) % (d - 1);
        let n_f = 1 + (t as usize * 3) % (d - 1);
        let inst = instance(3000 + t, d, d, n_f, n_0);
        let p_m = retain_null_projector(inst.sets.k_0(), DEFAULT_EIG_REL_TOL).map_err(|e| e.to_string())?;
        let sys = assemble_sylvester(&inst.w, &inst.sets, &p_m).map_err(|e| e.to_string())?;
        let kron = solve_sylvester_kron(&sys, DEFAULT_DIM_CAP).map_err(|e| e.to_string())?;
        let gd = solve_gd(&inst.w, &inst.sets, &p_m, &GdConfig::default()).map_err(|e| e.to_string())?;
        let wk0 = inst.w.matmul(inst.sets.k_0());
        for (name, d_tilde) in [("kron", &kron), ("gd", &gd.d_tilde)] {
            let w_new = apply_additive(&inst.w, d_tilde, &p_m).map_err(|e| e.to_string())?;
            let ratio = (&w_new.matmul(inst.sets.k_0()) - &wk0).frobenius_norm() / wk0.frobenius_norm();
            worst = worst.max(ratio);
            if !(ratio <= 1e-10) {
                return Err(format!("instance {t} ({name}): retained drift {ratio:.3e}"));
            }
        }
    }
    within(start.elapsed(), 60.0)?;
    Ok(format!("20 instances x 2 solvers, worst drift {worst:.2e}"))
}

/// Kronecker residual and agreement with gradient descent.
fn sylvester_agreement() -> Outcome {
    let start = Instant::now();
    let shapes = [
        (4usize, 4usize),
        (8, 8),
        (16, 16),
        (8, 16),
        (16, 8),
        (4, 12),
        (12, 4),
        (6, 10),
        (10, 6),
        (12, 12),
    ];
    let (mut worst_res, mut worst_gap) = (0.0f64, 0.0f64);
    for (t, &(d_m, d_k)) in shapes.iter().enumerate() {
        assert!(d_m * d_k <= 256);
        let n_0 = 1 + (t * 5) % (d_k - 1);
        let n_f = 1 + (t * 3) % (d_k.min(d_m) - 1);
        let inst = instance(4000 + t as u64, d_k, d_m, n_f, n_0);
        let p_m = retain_null_projector(inst.sets.k_0(), DEFAULT_EIG_REL_TOL).map_err(|e| e.to_string())?;
        let sys = assemble_sylvester(&inst.w, &inst.sets, &p_m).map_err(|e| e.to_string())?;
        let kron = solve_sylvester_kron(&sys, DEFAULT_DIM_CAP).map_err(|e| e.to_string())?;
        let res = sys.residual(&kron).frobenius_norm() / sys.z.frobenius_norm().max(1.0);
        let gd = solve_gd(&inst.w, &inst.sets, &p_m, &GdConfig::default()).map_err(|e| e.to_string())?;
        let gap = (&kron - &gd.d_tilde).frobenius_norm();
        worst_res = worst_res.max(res);
        worst_gap = worst_gap.max(gap);
        if !(res <= 1e-8) {
            return Err(format!("{d_m}x{d_k}: Kronecker residual {res:.3e}"));
        }
        if !gd.converged || !(gap <= 1e-5) {
            return Err(format!(
                "{d_m}x{d_k}: |D_kron - D_gd| = {gap:.3e} (converged: {})",
                gd.converged
            ));
        }
    }
    within(start.elapsed(), 120.0)?;
    Ok(format!(
        "10 instances, worst residual {worst_res:.2e}, worst gap {worst_gap:.2e}"
    ))
}

/// Analytic gradient against central finite differences.
fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for t in 0..20u64 {
        let d = 2 + (t as usize % 5);
        let n_0 = 1 + (t as usize) % (d - 1);
        let inst = instance(5000 + t, d, d, 1 + (t as usize % 2), n_0);
        let p_m = retain_null_projector(inst.sets.k_0(), DEFAULT_EIG_REL_TOL).map_err(|e| e.to_string())?;
        let point = Matrix::from_fn(d, d, |i, j| ((i * 11 + j * 5 + t as usize) as f64 * 0.37).sin());
        let analytic = objective_gradient(&point, &inst.w, &inst.sets, &p_m).map_err(|e| e.to_string())?;
        let fd = finite_diff_gradient(
            |x| additive_objective(x, &inst.w, &inst.sets, &p_m).expect("objective"),
            &point,
            1e-6,
        );
        let err = max_entry_error(&analytic, &fd);
        worst = worst.max(err);
        if !(err <= 1e-4) {
            return Err(format!("instance {t} (d={d}): relative error {err:.3e}"));
        }
    }
    within(start.elapsed(), 30.0)?;
    Ok(format!("20 instances, worst relative error {worst:.2e}"))
}

/// Kronecker path refuses large layers; gradient descent handles d = 64.
fn complexity_wall() -> Outcome {
    let inst = instance(6000, 64, 64, 8, 32);
    let p_m = retain_null_projector(inst.sets.k_0(), DEFAULT_EIG_REL_TOL).map_err(|e| e.to_string())?;
    let sys = assemble_sylvester(&inst.w, &inst.sets, &p_m).map_err(|e| e.to_string())?;
    match solve_sylvester_kron(&sys, DEFAULT_DIM_CAP) {
        Err(Error::ComplexityLimit { required, cap, .. }) if required == 4096 && cap == DEFAULT_DIM_CAP => {}
        Err(e) => return Err(format!("unexpected error from the Kronecker path: {e}")),
        Ok(_) => return Err("Kronecker path accepted d_m*d_k = 4096".into()),
    }
    let start = Instant::now();
    let gd = solve_gd(&inst.w, &inst.sets, &p_m, &GdConfig::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    if !gd.converged {
        return Err(format!("GD at d=64 did not converge in {} steps", gd.iters));
    }
    within(elapsed, 30.0)?;
    Ok(format!(
        "cap enforced at 4096 > {DEFAULT_DIM_CAP}; GD converged in {} steps, {:.2}s",
        gd.iters,
        elapsed.as_secs_f64()
    ))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Unlearning trend and PCA separation over 100 default pipelines.
fn pipeline_trends() -> (Outcome, Outcome) {
    let start = Instant::now();
    let mut efficacy_drops = 0;
    let mut separated = 0;
    let mut spec = (Vec::new(), Vec::new());
    let mut ppl = (Vec::new(), Vec::new());
    for seed in 1..=100u64 {
        let cfg = ExperimentConfig {
            seed,
            ..ExperimentConfig::default()
        };
        assert_eq!(
            (cfg.d_k, cfg.d_m, cfg.n_forget, cfg.method),
            (16, 16, 3, Method::Multiplicative)
        );
        let out = match run_pipeline(&cfg) {
            Ok(out) => out,
            Err(e) => {
                let msg = format!("seed {seed}: {e}");
                return (Err(msg.clone()), Err(msg));
            }
        };
        let m = out.report.metrics;
        efficacy_drops += (m.efficacy_after < m.efficacy_before) as usize;
        separated += (m.pca_centroid_distance > 0.1 * m.pca_spread) as usize;
        spec.0.push(m.specificity_before);
        spec.1.push(m.specificity_after);
        ppl.0.push(m.pseudo_ppl_before);
        ppl.1.push(m.pseudo_ppl_after);
    }
    let elapsed = start.elapsed();
    let (spec_b, spec_a) = (median(spec.0), median(spec.1));
    let (ppl_b, ppl_a) = (median(ppl.0), median(ppl.1));
    let trend = (|| {
        within(elapsed, 300.0)?;
        let detail = format!(
            "efficacy dropped in {efficacy_drops}/100, median specificity {spec_b:.3} -> {spec_a:.3}, \
             median pseudo-ppl {ppl_b:.4} -> {ppl_a:.4}"
        );
        if efficacy_drops >= 95 && spec_a >= 0.5 * spec_b && ppl_a <= 1.5 * ppl_b {
            Ok(detail)
        } else {
            Err(detail)
        }
    })();
    let detail = format!("separated on {separated}/100 seeds");
    let pca = if separated >= 90 { Ok(detail) } else { Err(detail) };
    (trend, pca)
}

/// Collects every numeric leaf, except wall-clock timings, with its path.
fn numeric_fields(v: &Value, path: &str, out: &mut Vec<(String, u64)>) {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                if k != "wall_time_seconds" {
                    numeric_fields(v, &format!("{path}.{k}"), out);
                }
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                numeric_fields(v, &format!("{path}[{i}]"), out);
            }
        }
        Value::Number(n) => out.push((path.to_string(), n.as_f64().expect("number").to_bits())),
        _ => {}
    }
}

fn run_cli(config: &Path, out: &Path) -> Result<Vec<(String, u64)>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_zul"))
        .args(["run", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(format!("zul run failed: {}", String::from_utf8_lossy(&status.stderr)));
    }
    let text = std::fs::read_to_string(out.join("report.json")).map_err(|e| e.to_string())?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let mut fields = Vec::new();
    numeric_fields(&doc, "", &mut fields);
    Ok(fields)
}

/// Two `zul run` invocations with the same config give identical numbers.
fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = tmp.path().join("config.json");
    std::fs::write(&config, r#"{"seed": 7, "layers": [7, 11]}"#).map_err(|e| e.to_string())?;
    let a = run_cli(&config, &tmp.path().join("a"))?;
    let b = run_cli(&config, &tmp.path().join("b"))?;
    if a.is_empty() {
        return Err("report has no numeric fields".into());
    }
    if a.len() != b.len() {
        return Err(format!(
            "reports differ in shape ({} vs {} numeric fields)",
            a.len(),
            b.len()
        ));
    }
    for ((pa, va), (pb, vb)) in a.iter().zip(&b) {
        if pa != pb || va != vb {
            return Err(format!("field {pa} differs between runs"));
        }
    }
    Ok(format!("{} numeric fields bit-identical (wall time excluded)", a.len()))
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |n: usize, name: &'static str, outcome: Outcome| {
        match &outcome {
            Ok(d) => println!("PASS criterion {n} ({name}): {d}"),
            Err(d) => println!("FAIL criterion {n} ({name}): {d}"),
        }
        results.push((n, name, outcome));
    };
    report(1, "null-space law", null_space_law());
    report(2, "closed-form optimality", closed_form_optimality());
    report(3, "additive exactness", additive_exactness());
    report(4, "Sylvester agreement", sylvester_agreement());
    report(5, "gradient correctness", gradient_correctness());
    report(6, "complexity wall", complexity_wall());
    let (trend, pca) = pipeline_trends();
    report(7, "unlearning trend", trend);
    report(8, "PCA separation", pca);
    report(9, "determinism", determinism());

    let failed: Vec<usize> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
