use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use slowfast_bench::{fixture, random_field};
use slowfast_core::integrators::{step_slow_fast, StepDraws};
use slowfast_core::noise::StepNoise;
use slowfast_core::registry::BURGERS_OU_LEVY;
use slowfast_core::{run_convergence_sweep, ExperimentSetup, SlowFastState};

fn nonlinearity(c: &mut Criterion) {
    let mut group = c.benchmark_group("burgers_nonlinearity");
    for n in [16, 32, 64, 128] {
        let f = fixture(BURGERS_OU_LEVY, n);
        let x = random_field(n, 7);
        group.bench_with_input(BenchmarkId::from_parameter(n), &x, |b, x| {
            b.iter(|| f.basis.burgers_nonlinearity(black_box(x)))
        });
    }
    group.finish();
}

fn coupled_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("step_slow_fast");
    for n in [16, 32, 64] {
        let f = fixture(BURGERS_OU_LEVY, n);
        let state = SlowFastState {
            x: f.system.x0.clone(),
            y: f.system.y0.clone(),
            t: 0.0,
        };
        let marks = [0.3];
        let draws = StepDraws {
            slow: StepNoise {
                gaussian: &f.normals,
                marks: &marks,
            },
            fast: StepNoise {
                gaussian: &f.normals,
                marks: &[],
            },
        };
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| {
                step_slow_fast(
                    black_box(&state),
                    &f.system.coeffs,
                    &f.system.noise,
                    &f.config,
                    &f.basis,
                    draws,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn small_sweep(c: &mut Criterion) {
    let n = 16;
    let setup = ExperimentSetup::from_example(BURGERS_OU_LEVY, n).unwrap();
    let mut cfg = fixture(BURGERS_OU_LEVY, n).config;
    cfg.dt = 1e-3;
    cfg.horizon = 0.1;
    cfg.delta = 0.1;
    cfg.mc_samples = 8;
    let mut group = c.benchmark_group("convergence_sweep");
    group.sample_size(10);
    group.bench_function("n16_m8_t0.1", |b| {
        b.iter(|| run_convergence_sweep(&setup, &cfg, &[0.1, 0.01], None, 1).unwrap())
    });
    group.finish();
}

criterion_group!(benches, nonlinearity, coupled_step, small_sweep);
criterion_main!(benches);
