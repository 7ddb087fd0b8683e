use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use zul_core::additive::{
    assemble_sylvester, retain_null_projector, solve_gd, solve_sylvester_kron, DEFAULT_DIM_CAP, DEFAULT_EIG_REL_TOL,
};
use zul_core::descent::GdConfig;
use zul_core::instance::{random_instance, Instance, InstanceSpec};
use zul_core::kernel::{DEFAULT_REL_TOL, DEFAULT_RIDGE};
use zul_core::multiplicative::closed_form_update;

fn instance(d: usize, n_utility: usize) -> Instance {
    random_instance(&InstanceSpec {
        seed: 42,
        d_k: d,
        d_m: d,
        n_forget: (d / 4).max(1),
        n_utility,
    })
    .expect("instance")
}

fn closed_form(c: &mut Criterion) {
    let mut group = c.benchmark_group("closed_form");
    for d in [8usize, 16, 32, 64] {
        let inst = instance(d, 4 * d);
        group.bench_with_input(BenchmarkId::from_parameter(d), &inst, |b, inst| {
            b.iter(|| closed_form_update(black_box(&inst.w), &inst.sets, DEFAULT_REL_TOL, DEFAULT_RIDGE).unwrap())
        });
    }
    group.finish();
}

fn sylvester(c: &mut Criterion) {
    let mut kron = c.benchmark_group("sylvester_kron");
    kron.sample_size(10);
    let mut cases = Vec::new();
    // d_m * d_k must stay under the dimension cap
    for d in [8usize, 16, 32, 44] {
        let inst = instance(d, d / 2);
        let p_m = retain_null_projector(inst.sets.k_0(), DEFAULT_EIG_REL_TOL).unwrap();
        let sys = assemble_sylvester(&inst.w, &inst.sets, &p_m).unwrap();
        kron.bench_with_input(BenchmarkId::from_parameter(d), &sys, |b, sys| {
            b.iter(|| solve_sylvester_kron(black_box(sys), DEFAULT_DIM_CAP).unwrap())
        });
        cases.push((d, inst, p_m));
    }
    kron.finish();

    let mut gd = c.benchmark_group("additive_gd");
    gd.sample_size(10);
    let cfg = GdConfig::default();
    for (d, inst, p_m) in &cases {
        gd.bench_with_input(BenchmarkId::from_parameter(d), &(inst, p_m), |b, (inst, p_m)| {
            b.iter(|| solve_gd(black_box(&inst.w), &inst.sets, p_m, &cfg).unwrap())
        });
    }
    gd.finish();
}

criterion_group!(benches, closed_form, sylvester);
criterion_main!(benches);
