use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use respire::robust::{fit_respire, RobustConfig};
use respire::tuning::{grid_search, HyperGrid};
use respire::{compress, fit_spr};
use respire_bench::{problem, train_split};

const SIZES: [usize; 3] = [100, 200, 400];

fn gram(c: &mut Criterion) {
    let mut g = c.benchmark_group("gram");
    for n in SIZES {
        let (p, spec) = problem(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| spec.gram(black_box(&p.z))));
    }
    g.finish();
}

fn spr(c: &mut Criterion) {
    let mut g = c.benchmark_group("fit_spr");
    for n in SIZES {
        let (p, spec) = problem(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| fit_spr(black_box(&p), spec, 1.0).unwrap())
        });
    }
    g.finish();
}

fn robust(c: &mut Criterion) {
    let mut g = c.benchmark_group("fit_respire");
    let cfg = RobustConfig {
        alpha: 0.1,
        ..RobustConfig::default()
    };
    for n in SIZES {
        let (p, spec) = problem(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| fit_respire(black_box(&p), spec, &cfg).unwrap())
        });
    }
    g.finish();
}

fn compression(c: &mut Criterion) {
    let mut g = c.benchmark_group("compress_10pct");
    for n in SIZES {
        let (p, spec) = problem(n);
        let model = fit_spr(&p, spec, 1.0).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| compress(black_box(&model), &p, n / 10).unwrap())
        });
    }
    g.finish();
}

fn tuning(c: &mut Criterion) {
    let train = train_split(200);
    let mut g = c.benchmark_group("grid_search");
    g.sample_size(10);
    g.bench_function("default_grid_200", |b| {
        b.iter(|| grid_search(black_box(&train), &HyperGrid::default(), 3, &RobustConfig::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, gram, spr, robust, compression, tuning);
criterion_main!(benches);
