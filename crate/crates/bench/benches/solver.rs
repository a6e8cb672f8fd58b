use criterion::{criterion_group, criterion_main, Criterion};
use krylov_bench::{cylinder_set, member, unit_grid};
use krylov_core::solver::{solve_observed, ZeroBoundary};
use std::hint::black_box;

fn fundamental(c: &mut Criterion) {
    let mut g = c.benchmark_group("fundamental");
    g.sample_size(10);
    for (dim, nodes) in [(1, 65), (1, 129), (2, 33)] {
        let (grid, op) = unit_grid(dim, nodes).unwrap();
        let set = cylinder_set(dim, nodes, -0.5, 0.25, 256).unwrap();
        g.bench_function(format!("N{dim}_{nodes}"), |b| {
            b.iter(|| solve_observed(&grid, &op, &set, &ZeroBoundary, &mut |_, _, _| {}).unwrap())
        });
    }
    g.finish();
}

fn ensemble_member(c: &mut Criterion) {
    let mut g = c.benchmark_group("member");
    g.sample_size(10);
    let m = member(65, 1).unwrap();
    g.bench_function("mixed_65", |b| b.iter(|| black_box(m.solve().unwrap())));
    g.finish();
}

criterion_group!(benches, fundamental, ensemble_member);
criterion_main!(benches);
