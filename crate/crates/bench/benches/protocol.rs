use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fsar_bench::configs;
use fsar_core::metrics::compute;
use fsar_core::sim::run_scenario;
use fsar_core::stats;
use std::hint::black_box;

fn scenarios(c: &mut Criterion) {
    let mut g = c.benchmark_group("run_scenario");
    for cfg in configs(4, 42) {
        let id = BenchmarkId::new(cfg.arch.to_string(), format!("s{}", cfg.scenario.id));
        g.bench_with_input(id, &cfg, |b, cfg| b.iter(|| run_scenario(black_box(cfg)).unwrap()));
    }
    g.finish();
}

fn fleet_scaling(c: &mut Criterion) {
    let mut g = c.benchmark_group("fleet_size");
    for n in [4, 8, 16] {
        let cfg = configs(n, 42).into_iter().find(|c| c.scenario.id == 5).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &cfg, |b, cfg| {
            b.iter(|| run_scenario(black_box(cfg)).unwrap())
        });
    }
    g.finish();
}

fn metrics(c: &mut Criterion) {
    let results: Vec<_> = configs(4, 42).iter().map(|c| run_scenario(c).unwrap()).collect();
    c.bench_function("metrics/compute_all", |b| {
        b.iter(|| results.iter().map(|r| compute(black_box(r))).count())
    });
}

fn significance(c: &mut Criterion) {
    let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 101) as f64 / 101.0).collect();
    let ys: Vec<f64> = (0..100).map(|i| ((i * 53) % 97) as f64 / 97.0).collect();
    c.bench_function("stats/compare_100", |b| b.iter(|| stats::compare(black_box(&xs), black_box(&ys)).unwrap()));
    c.bench_function("stats/compare_20_exact", |b| {
        b.iter(|| stats::compare(black_box(&xs[..20]), black_box(&ys[..20])).unwrap())
    });
}

criterion_group!(benches, scenarios, fleet_scaling, metrics, significance);
criterion_main!(benches);
