use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use lambdahat::estimators::predictive_log_densities;
use lambdahat::{empirical_loss, inject_outliers, lambda_imai, quad_lambda_estimates, run_mcmc, EstimatorSettings};
use lambdahat_bench::{example1_case, gauss_mix_case, poisson_case, short_mcmc, untempered_draws};

fn sampler(c: &mut Criterion) {
    let mut g = c.benchmark_group("run_mcmc");
    g.sample_size(10);
    let (m, d) = poisson_case(750);
    let beta = 1.0 / 750f64.ln();
    g.bench_function("poisson-mix:2 n=750 2x2000", |b| {
        b.iter(|| run_mcmc(&m, &d, beta, &short_mcmc(2000)).unwrap())
    });
    let (m, d) = gauss_mix_case(1500);
    let beta = 1.0 / 1500f64.ln();
    g.bench_function("gauss-mix:4 n=1500 2x1000", |b| {
        b.iter(|| run_mcmc(&m, &d, beta, &short_mcmc(1000)).unwrap())
    });
    g.finish();
}

fn estimators(c: &mut Criterion) {
    let (m, d) = example1_case(750);
    let draws = untempered_draws(&m, &d, 4000);
    c.bench_function("empirical_loss 4000x750", |b| {
        b.iter(|| empirical_loss(black_box(&draws)).unwrap())
    });
    c.bench_function("predictive_log_densities 4000x750", |b| {
        b.iter(|| predictive_log_densities(black_box(&draws)).unwrap())
    });
    c.bench_function("lambda_imai 4000 draws", |b| {
        b.iter(|| lambda_imai(black_box(&draws)).unwrap())
    });
    c.bench_function("inject_outliers 50 copies", |b| {
        b.iter_batched(|| &draws, |d| inject_outliers(d, 50, 400.0).unwrap(), BatchSize::SmallInput)
    });
}

fn oracle(c: &mut Criterion) {
    let mut g = c.benchmark_group("quadrature");
    g.sample_size(10);
    let settings = EstimatorSettings::default();
    let (m, d) = example1_case(500);
    g.bench_function("example1 n=500 all estimators", |b| {
        b.iter(|| quad_lambda_estimates(&m, None, &d, &settings).unwrap())
    });
    g.finish();
}

criterion_group!(benches, sampler, estimators, oracle);
criterion_main!(benches);
