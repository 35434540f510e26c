use std::hint::black_box;

use brenier::backward::conjugate;
use brenier::forward::objective;
use brenier::{solve, GaussianSpace, ScalarTarget, SolveConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn quadrature(c: &mut Criterion) {
    let mut group = c.benchmark_group("quadrature");
    for (dim, level) in [(1, 80), (2, 30), (3, 12)] {
        let space = GaussianSpace::tensor_hermite(dim, level).unwrap();
        let target = ScalarTarget::quartic_well(dim, 0.05, 0.25).unwrap();
        let phi = brenier::PotentialField::zero(dim, 4).unwrap();
        group.bench_with_input(
            BenchmarkId::new("objective", format!("d{dim}-level{level}")),
            &(),
            |b, _| b.iter(|| objective(black_box(&space), black_box(&target), black_box(&phi)).unwrap()),
        );
    }
    group.finish();
}

fn forward_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward-solve");
    group.sample_size(10);
    for (dim, level, degree) in [(1, 30, 6), (1, 30, 10), (2, 20, 4)] {
        let space = GaussianSpace::tensor_hermite(dim, level).unwrap();
        let target = ScalarTarget::quartic_well(dim, 0.05, 0.25).unwrap();
        let config = SolveConfig::new(degree);
        group.bench_function(BenchmarkId::new("quartic", format!("d{dim}-p{degree}")), |b| {
            b.iter(|| solve(black_box(&space), black_box(&target), &config).unwrap())
        });
    }
    group.finish();
}

fn conjugation(c: &mut Criterion) {
    let mut group = c.benchmark_group("conjugate");
    group.sample_size(10);
    for (dim, level, degree) in [(1, 30, 10), (2, 20, 4)] {
        let space = GaussianSpace::tensor_hermite(dim, level).unwrap();
        let target = ScalarTarget::quartic_well(dim, 0.05, 0.25).unwrap();
        let phi = solve(&space, &target, &SolveConfig::new(degree)).unwrap().phi;
        group.bench_function(BenchmarkId::new("quartic", format!("d{dim}-p{degree}")), |b| {
            b.iter(|| conjugate(black_box(&space), black_box(&target), black_box(&phi), degree).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, quadrature, forward_solve, conjugation);
criterion_main!(benches);
