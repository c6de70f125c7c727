use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use shearlab::evolution::{self, EvolutionState, LinearFlow, NonlinearFlow};
use shearlab::spectral::{self, LinearizedSystem};
use shearlab::{stationary, ShearModel};

fn level_integrals(c: &mut Criterion) {
    let model = ShearModel::default();
    let mut g = c.benchmark_group("stationary");
    g.bench_function("d_value", |b| b.iter(|| stationary::d_value(&model, black_box(0.1)).unwrap()));
    g.bench_function("d_prime", |b| b.iter(|| stationary::d_prime(&model, black_box(0.1)).unwrap()));
    g.bench_function("profile_513", |b| b.iter(|| stationary::reconstruct_profile_on(&model, black_box(0.1), 513).unwrap()));
    g.finish();
}

fn evans(c: &mut Criterion) {
    let model = ShearModel::default();
    let sys = LinearizedSystem::at_level(&model, 0.1).unwrap();
    let mut g = c.benchmark_group("spectral");
    g.bench_function("evans", |b| b.iter(|| spectral::evans(&sys, black_box(-3.0)).unwrap()));
    g.bench_function("monodromy", |b| b.iter(|| spectral::monodromy(&sys).unwrap()));
    g.finish();
}

fn steps(c: &mut Criterion) {
    let model = ShearModel::default();
    let n = 513;
    let dt = 1.0 / (n - 1) as f64;
    let prof = stationary::reconstruct_profile_on(&model, 0.1, n).unwrap();
    let ubar = prof.ubar;
    let linear = LinearFlow::new(*model.params(), prof.clone());
    let (du, dtheta) = evolution::random_perturbation(n, 0, 1e-3);
    let nonlinear = NonlinearFlow::new(*model.params(), ubar);

    let mut g = c.benchmark_group("evolution");
    g.bench_function("linear_step_513", |b| {
        b.iter_batched(
            || EvolutionState::new(du.clone(), dtheta.clone()).unwrap(),
            |mut s| linear.step(&mut s, dt).unwrap(),
            BatchSize::SmallInput,
        )
    });
    g.bench_function("nonlinear_step_513", |b| {
        b.iter_batched(
            || EvolutionState::new(prof.u.clone(), prof.theta.clone()).unwrap(),
            |mut s| nonlinear.step(&mut s, dt).unwrap(),
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

criterion_group!(benches, level_integrals, evans, steps);
criterion_main!(benches);
