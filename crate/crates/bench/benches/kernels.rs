use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use trimwave_bench::strip_ensemble;
use trimwave_core::disorder::sample_potential;
use trimwave_core::green::green_column;
use trimwave_core::hamiltonian::assemble_h;
use trimwave_core::spectral::eigen_sym;

fn bench_assembly(c: &mut Criterion) {
    let mut g = c.benchmark_group("assemble_h");
    for k in [8usize, 16, 32] {
        let ens = strip_ensemble(4, k);
        let v = sample_potential(&ens, 0).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, _| {
            b.iter(|| assemble_h(ens.mask.lattice(), black_box(&v)).unwrap())
        });
    }
    g.finish();
}

fn bench_sampling(c: &mut Criterion) {
    let ens = strip_ensemble(8, 32);
    c.bench_function("sample_potential/16x64", |b| {
        b.iter(|| sample_potential(&ens, black_box(3)).unwrap())
    });
}

fn bench_eigen(c: &mut Criterion) {
    let mut g = c.benchmark_group("eigen_sym");
    g.sample_size(10);
    for k in [8usize, 16] {
        let ens = strip_ensemble(4, k);
        let h = assemble_h(ens.mask.lattice(), &sample_potential(&ens, 0).unwrap()).unwrap();
        g.bench_with_input(BenchmarkId::new("values", h.dim()), &h, |b, h| {
            b.iter(|| eigen_sym(h, false).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("vectors", h.dim()), &h, |b, h| {
            b.iter(|| eigen_sym(h, true).unwrap())
        });
    }
    g.finish();
}

fn bench_green(c: &mut Criterion) {
    let mut g = c.benchmark_group("green_column");
    g.sample_size(10);
    let ens = strip_ensemble(4, 16);
    let h = assemble_h(ens.mask.lattice(), &sample_potential(&ens, 0).unwrap()).unwrap();
    g.bench_function(BenchmarkId::from_parameter(h.dim()), |b| {
        b.iter(|| green_column(&h, black_box(-4.0), 1e-3, 1).unwrap())
    });
    g.finish();
}

criterion_group!(
    benches,
    bench_assembly,
    bench_sampling,
    bench_eigen,
    bench_green
);
criterion_main!(benches);
