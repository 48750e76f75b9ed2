use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use repeater_bench::werner_pair;
use repeater_core::belldiag::{convolve, dejmps, dephase, rate_from_tc};

fn algebra(c: &mut Criterion) {
    let (a, b) = werner_pair();
    let rate = rate_from_tc(5e-3).unwrap();
    c.bench_function("convolve", |bench| bench.iter(|| convolve(black_box(&a), black_box(&b))));
    c.bench_function("dejmps", |bench| bench.iter(|| dejmps(black_box(&a), black_box(&b))));
    c.bench_function("dephase", |bench| bench.iter(|| dephase(black_box(&a), black_box(1e-4), rate)));
}

criterion_group!(benches, algebra);
criterion_main!(benches);
