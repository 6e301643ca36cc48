use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use roomwave_bench::fixture;
use roomwave_core::physics::loss_gradient;
use roomwave_core::{
    evaluation_grid, forward_batch, forward_with_derivatives_batch, gf_convolve, modal_solve,
    total_loss, HelmholtzProblem, LossWeights, Sharpness,
};

fn forward(c: &mut Criterion) {
    let mut g = c.benchmark_group("forward");
    for width in [32, 64, 150] {
        let f = fixture(3, 3, width, 4.0);
        let pts = f.samples.interior.view();
        g.bench_with_input(BenchmarkId::new("value", width), &width, |b, _| {
            b.iter(|| forward_batch(&f.params, &f.spec, black_box(pts)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("derivatives", width), &width, |b, _| {
            b.iter(|| forward_with_derivatives_batch(&f.params, &f.spec, black_box(pts)).unwrap())
        });
    }
    g.finish();
}

fn loss(c: &mut Criterion) {
    let mut g = c.benchmark_group("loss");
    g.sample_size(20);
    for width in [32, 64] {
        let f = fixture(3, 3, width, 4.0);
        let w = LossWeights::room_3d(f.problem.medium.k0());
        g.bench_with_input(BenchmarkId::new("value", width), &width, |b, _| {
            b.iter(|| total_loss(&f.params, &f.spec, &f.problem, &f.samples, w).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("gradient", width), &width, |b, _| {
            b.iter(|| loss_gradient(&f.params, &f.spec, &f.problem, &f.samples, w).unwrap())
        });
    }
    g.finish();
}

fn oracles(c: &mut Criterion) {
    let mut g = c.benchmark_group("oracle");
    g.sample_size(10);
    for s in [1.0, 0.1] {
        let p = HelmholtzProblem::unit_box(3, 2.0, -0.04, Sharpness(s));
        g.bench_with_input(BenchmarkId::new("modal_solve", s), &s, |b, _| {
            b.iter(|| modal_solve(&p, None).unwrap())
        });
    }
    let p = HelmholtzProblem::unit_box(3, 2.0, -0.04, Sharpness(1.0));
    let q = evaluation_grid(&p.domain, 9).points();
    g.bench_function("gf_convolve_20", |b| {
        b.iter(|| gf_convolve(&p, &[20, 20, 20], q.view()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, forward, loss, oracles);
criterion_main!(benches);
