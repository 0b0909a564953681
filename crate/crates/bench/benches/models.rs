use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use skintone_bench::{grouped_design, linear_design};
use skintone_core::stats::{lmm_fit, ols_fit, stepwise_bic};

fn ols(c: &mut Criterion) {
    let mut g = c.benchmark_group("ols_fit");
    for n in [500, 5000] {
        let spec = linear_design(n, 6, 2);
        g.bench_with_input(BenchmarkId::from_parameter(n), &spec, |b, s| b.iter(|| ols_fit(black_box(s)).unwrap()));
    }
    g.finish();
}

fn stepwise(c: &mut Criterion) {
    let spec = linear_design(2000, 6, 3);
    c.bench_function("stepwise_bic/2000x7", |b| b.iter(|| stepwise_bic(black_box(&spec)).unwrap()));
}

fn lmm(c: &mut Criterion) {
    let mut g = c.benchmark_group("lmm_fit");
    g.sample_size(20);
    for groups in [30, 300] {
        let spec = grouped_design(groups, 20, 4);
        g.bench_with_input(BenchmarkId::from_parameter(groups), &spec, |b, s| {
            b.iter(|| lmm_fit(black_box(s), "group").unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, ols, stepwise, lmm);
criterion_main!(benches);
