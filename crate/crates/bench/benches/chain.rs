use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use repeater_bench::small_scenario;
use repeater_core::sim::run_chain;

fn chain(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_chain");
    group.sample_size(20);
    for name in ["Parallel", "Nested", "Nested*", "Consecutive"] {
        let s = small_scenario(name, 10);
        group.bench_with_input(BenchmarkId::from_parameter(name), &s, |b, s| {
            b.iter(|| run_chain(s.tunnel(), s.params(), 1, false).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, chain);
criterion_main!(benches);
