use std::hint::black_box;

use affordance::manip::velocity_manipulability;
use affordance::ocp::batch_lqr;
use affordance::{solve_problem, KinematicChain};
use affordance_bench::{lqr_fixture, short_problem};
use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DVector;

fn kinematics(c: &mut Criterion) {
    let chain = KinematicChain::preset("spatial7").unwrap();
    let q = DVector::from_vec(vec![0.0, -0.785, 0.0, -2.356, 0.0, 1.571, 0.785]);
    c.bench_function("spatial7 state + jacobian", |b| {
        b.iter(|| chain.state(black_box(&q)).unwrap().jacobian())
    });
    c.bench_function("spatial7 weighted manipulability", |b| {
        b.iter(|| velocity_manipulability(&chain, black_box(&q), true).unwrap())
    });
}

fn lqr(c: &mut Criterion) {
    let f = lqr_fixture(100).unwrap();
    c.bench_function("batch lqr planar3 T=100", |b| {
        b.iter(|| batch_lqr(&f.s_u, &f.q, &f.r, &f.x_d, &f.x1, &f.s_x).unwrap())
    });
}

fn solve(c: &mut Criterion) {
    let problem = short_problem("fig3a-1", 3).unwrap();
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    group.bench_function("fig3a-1 three outer iterations", |b| {
        b.iter(|| solve_problem(black_box(&problem)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, kinematics, lqr, solve);
criterion_main!(benches);
