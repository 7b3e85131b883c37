use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lyapsplit::solver::{compress, residual_fnorm, step};
use lyapsplit_bench::sparse_fixture;

fn iteration(c: &mut Criterion) {
    let mut group = c.benchmark_group("sparse");
    group.sample_size(20);
    for n in [2_000, 10_000] {
        let fx = sparse_fixture(n, 2, 10).expect("fixture");
        let b = fx.sys.b_dense().to_owned();
        group.bench_with_input(BenchmarkId::new("solve", n), &n, |bch, _| {
            bch.iter(|| black_box(fx.fact.solve(b.as_ref()).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("step", n), &n, |bch, _| {
            bch.iter(|| black_box(step(&fx.state, &fx.fact, fx.sys.a()).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("residual", n), &n, |bch, _| {
            bch.iter(|| black_box(residual_fnorm(&fx.state, fx.sys.a(), fx.sys.b()).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("compress", n), &n, |bch, _| {
            bch.iter(|| black_box(compress(&fx.state, 1e-9).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, iteration);
criterion_main!(benches);
