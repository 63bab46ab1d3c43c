use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

const MOBILITY: &str = include_str!("../../cli/examples/mobility_p2.json");

fn bench_load(c: &mut Criterion) {
    c.bench_function("config_load_validate", |b| {
        b.iter(|| trimwave_cli::config::load(black_box(MOBILITY)))
    });
}

criterion_group!(benches, bench_load);
criterion_main!(benches);
