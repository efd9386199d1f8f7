use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use upen::mm::{run_gupenmm, run_upenmm, surrogate_scaled_log};
use upen::solvers::{solve, solve_fista, solve_newton_projection, solve_unconstrained, Gram, InnerSettings};
use upen::{Constraint, LambdaVector, MMConfig, SubproblemSpec};
use upen_bench::fixture;

fn subproblems(c: &mut Criterion) {
    let mut group = c.benchmark_group("subproblem");
    let settings = InnerSettings::default();

    let (t1, pen) = fixture("t1", 0.01, Constraint::Unconstrained);
    let lambda = LambdaVector::uniform(pen.p(), 1e-3).unwrap();
    let gram = Gram::new(&t1.operator, &t1.b).unwrap();
    group.bench_function("t1_cholesky", |b| {
        let spec = SubproblemSpec::new(&t1.operator, &t1.b, &lambda, &pen, Constraint::Unconstrained)
            .unwrap()
            .with_gram(&gram);
        b.iter(|| solve_unconstrained(black_box(&spec)).unwrap())
    });

    let (t2, pen2) = fixture("t2", 0.01, Constraint::Nonnegative);
    let lambda2 = LambdaVector::uniform(pen2.p(), 1e-3).unwrap();
    let gram2 = Gram::new(&t2.operator, &t2.b).unwrap();
    group.bench_function("t2_newton_projection", |b| {
        let spec = SubproblemSpec::new(&t2.operator, &t2.b, &lambda2, &pen2, Constraint::Nonnegative)
            .unwrap()
            .with_gram(&gram2);
        b.iter(|| solve_newton_projection(black_box(&spec), settings.newton_tol, settings.newton_max_iter).unwrap())
    });

    let (nmr, pen3) = fixture("nmr2d", 0.01, Constraint::Nonnegative);
    let lambda3 = LambdaVector::uniform(pen3.p(), 1e-4).unwrap();
    group.bench_function("nmr2d_fista", |b| {
        let spec = SubproblemSpec::new(&nmr.operator, &nmr.b, &lambda3, &pen3, Constraint::Nonnegative).unwrap();
        b.iter(|| solve_fista(black_box(&spec), settings.fista_tol, settings.fista_max_iter).unwrap())
    });
    group.bench_function("nmr2d_dispatch", |b| {
        let spec = SubproblemSpec::new(&nmr.operator, &nmr.b, &lambda3, &pen3, Constraint::Nonnegative).unwrap();
        b.iter(|| solve(black_box(&spec), &settings).unwrap())
    });
    group.finish();
}

fn drivers(c: &mut Criterion) {
    let mut group = c.benchmark_group("driver");
    group.sample_size(10);
    for name in ["t1", "t3"] {
        let (problem, pen) = fixture(name, 0.01, Constraint::Nonnegative);
        group.bench_function(format!("{name}_upenmm"), |b| {
            b.iter(|| run_upenmm(black_box(&problem), &pen, &MMConfig::upenmm(1e-2)).unwrap())
        });
        group.bench_function(format!("{name}_gupenmm"), |b| {
            b.iter(|| run_gupenmm(black_box(&problem), &pen, &MMConfig::gupenmm(1e-2)).unwrap())
        });
    }
    group.finish();
}

fn surrogate(c: &mut Criterion) {
    let p = 6400;
    let lambda = LambdaVector::new(
        (0..p)
            .map(|i| 10f64.powf(-8.0 + 12.0 * i as f64 / (p - 1) as f64))
            .collect(),
    )
    .unwrap();
    c.bench_function("surrogate_scaled_log_p6400", |b| {
        b.iter(|| surrogate_scaled_log(black_box(3.5), black_box(&lambda)).unwrap())
    });
}

criterion_group!(benches, subproblems, drivers, surrogate);
criterion_main!(benches);
