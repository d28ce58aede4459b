use std::f64::consts::PI;
use std::sync::Arc;

use slowfast_core::averaging::{analytic_averaged_drift, estimate_averaged_drift, ErgodicOptions};
use slowfast_core::experiments::{mean_and_stderr, run_convergence_sweep, ExperimentSetup};
use slowfast_core::integrators::{
    simulate_averaged, simulate_frozen, simulate_slow_fast, simulate_slow_fast_replay, FastDrift, PathSeed,
    RecordOptions, SimulationConfig, SystemCoefficients, SystemNoise,
};
use slowfast_core::noise::{path_stream, Channel, NoiseModel};
use slowfast_core::registry::{example, BURGERS_OU_LEVY};
use slowfast_core::spectral::{build_basis, SpectralField};

/// Method-of-lines finite differences for `u_t = u_xx + u u_x − u` with
/// homogeneous Dirichlet data, classical RK4 in time.
fn fd_burgers(u0: impl Fn(f64) -> f64, points: usize, horizon: f64, dt: f64) -> Vec<f64> {
    let h = 1.0 / points as f64;
    let mut u: Vec<f64> = (0..=points).map(|j| u0(j as f64 * h)).collect();
    u[0] = 0.0;
    u[points] = 0.0;
    let rhs = |u: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for j in 1..points {
            let uxx = (u[j + 1] - 2.0 * u[j] + u[j - 1]) / (h * h);
            let ux = (u[j + 1] - u[j - 1]) / (2.0 * h);
            out[j] = uxx + u[j] * ux - u[j];
        }
        out
    };
    let steps = (horizon / dt).round() as usize;
    let axpy = |u: &[f64], k: &[f64], a: f64| -> Vec<f64> { u.iter().zip(k).map(|(x, y)| x + a * y).collect() };
    for _ in 0..steps {
        let k1 = rhs(&u);
        let k2 = rhs(&axpy(&u, &k1, dt / 2.0));
        let k3 = rhs(&axpy(&u, &k2, dt / 2.0));
        let k4 = rhs(&axpy(&u, &k3, dt));
        for j in 0..u.len() {
            u[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    u
}

fn deterministic_burgers() -> SystemCoefficients {
    let mut c = SystemCoefficients::heat();
    c.advection = true;
    c.f1 = Some(Arc::new(|u: &SpectralField, _v: &SpectralField| -u));
    c
}

#[test]
fn galerkin_burgers_matches_finite_difference_reference() {
    let n = 32;
    let basis = build_basis(n, 2 * n + 1).unwrap();
    let u0 = |x: f64| 3.0 * (PI * x).sin() + 1.5 * (2.0 * PI * x).sin() - 0.5 * (3.0 * PI * x).sin();
    let x0 = SpectralField::from_fn(n, u0);
    let cfg = SimulationConfig::new(0.1, 1e-5, 0.1, n);
    let run = simulate_slow_fast(
        &x0,
        &SpectralField::zeros(n),
        &deterministic_burgers(),
        &SystemNoise::silent(n),
        &cfg,
        &basis,
        PathSeed { master: 0, path: 0 },
        RecordOptions::default(),
    )
    .unwrap();
    let points = 400;
    let reference = fd_burgers(u0, points, 0.1, 2e-6);
    let xs: Vec<f64> = (1..points).map(|j| j as f64 / points as f64).collect();
    let last = run.x.last();
    let mut err = 0.0f64;
    let mut scale = 0.0f64;
    for (j, x) in xs.iter().enumerate() {
        let v: f64 = last
            .coeffs()
            .iter()
            .enumerate()
            .map(|(k, c)| c * 2f64.sqrt() * ((k + 1) as f64 * PI * x).sin())
            .sum();
        err = err.max((v - reference[j + 1]).abs());
        scale = scale.max(reference[j + 1].abs());
    }
    assert!(err <= 1e-3 * scale, "max deviation {err:.3e} against scale {scale:.3e}");
}

#[test]
fn deterministic_burgers_from_constant_data_decays() {
    let n = 32;
    let basis = build_basis(n, 2 * n + 1).unwrap();
    let mut coeffs = deterministic_burgers();
    coeffs.f1 = None;
    let x0 = SpectralField::constant(n, 2.0);
    let cfg = SimulationConfig::new(0.1, 1e-4, 1.0, n);
    let run = simulate_slow_fast(
        &x0,
        &SpectralField::zeros(n),
        &coeffs,
        &SystemNoise::silent(n),
        &cfg,
        &basis,
        PathSeed { master: 0, path: 0 },
        RecordOptions::default(),
    )
    .unwrap();
    assert!(run.x.last().norm() < x0.norm());
    // the finite-difference reference decays as well
    let fd = fd_burgers(|_| 2.0, 200, 1.0, 1e-5);
    let fd_norm = (fd.iter().map(|v| v * v).sum::<f64>() / 200.0).sqrt();
    assert!(fd_norm < 2.0);
    assert!((run.x.last().norm() - fd_norm).abs() < 0.05 * fd_norm.max(1e-3) + 1e-4);
}

#[test]
fn worked_example_stays_finite() {
    let n = 32;
    let ex = example(BURGERS_OU_LEVY, n).unwrap();
    let basis = build_basis(n, 2 * n + 1).unwrap();
    let cfg = SimulationConfig::new(0.1, 1e-4, 1.0, n);
    let run = simulate_slow_fast(
        &ex.x0,
        &ex.y0,
        &ex.coeffs,
        &ex.noise,
        &cfg,
        &basis,
        PathSeed { master: 12345, path: 3 },
        RecordOptions::default(),
    )
    .unwrap();
    assert_eq!(run.x.len(), 10_001);
    assert!(run.x.states().all(|s| s.iter().all(|v| v.is_finite())));
}

#[test]
fn identical_noise_gives_bit_identical_runs() {
    let n = 16;
    let ex = example(BURGERS_OU_LEVY, n).unwrap();
    let basis = build_basis(n, 2 * n + 1).unwrap();
    let cfg = SimulationConfig::new(0.05, 1e-3, 0.5, n);
    let seed = PathSeed { master: 99, path: 7 };
    let a = simulate_slow_fast(
        &ex.x0,
        &ex.y0,
        &ex.coeffs,
        &ex.noise,
        &cfg,
        &basis,
        seed,
        RecordOptions::default(),
    )
    .unwrap();
    let b = simulate_slow_fast_replay(
        &ex.x0,
        &ex.y0,
        &ex.coeffs,
        &ex.noise,
        &cfg,
        &basis,
        a.slow_noise.clone(),
        a.fast_noise.clone(),
        RecordOptions::default(),
    )
    .unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.y_final, b.y_final);
}

#[test]
fn averaged_equation_equals_slow_equation_when_fast_is_pinned() {
    let n = 16;
    let basis = build_basis(n, 2 * n + 1).unwrap();
    let mut ex = example(BURGERS_OU_LEVY, n).unwrap();
    ex.coeffs.f2 = FastDrift::Linear {
        damping: 0.0,
        forcing: None,
    };
    ex.noise.fast = NoiseModel::silent(n);
    let y_star = SpectralField::from_fn(n, |x| (3.0 * PI * x).sin() - 0.5);
    let cfg = SimulationConfig::new(0.01, 1e-3, 1.0, n);
    let run = simulate_slow_fast(
        &ex.x0,
        &y_star,
        &ex.coeffs,
        &ex.noise,
        &cfg,
        &basis,
        PathSeed { master: 5, path: 0 },
        RecordOptions::default(),
    )
    .unwrap();
    assert_eq!(run.y_final, y_star);
    let pinned = y_star.clone();
    let fbar = move |u: &SpectralField| -(u + &pinned);
    let avg = simulate_averaged(&ex.x0, &fbar, &ex.coeffs, &ex.noise.slow, &cfg, &basis, &run.slow_noise).unwrap();
    for i in 0..avg.len() {
        assert!(avg.field(i).distance(&run.x.field(i)) <= 1e-12);
    }
}

#[test]
fn frozen_process_stationary_law() {
    let n = 4;
    let basis = build_basis(n, 2 * n + 1).unwrap();
    let ex = example(BURGERS_OU_LEVY, n).unwrap();
    let alpha = ex.noise.fast.q_coeffs.clone();
    let mut rng = path_stream(2024, 0, Channel::Frozen);
    // start from the stationary law
    let mut start_rng = path_stream(2024, 1, Channel::Frozen);
    let y0 = SpectralField::new(
        alpha
            .iter()
            .map(|a| {
                let g: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut start_rng);
                (a / 2.0).sqrt() * g
            })
            .collect(),
    );
    let traj = simulate_frozen(
        &ex.x0,
        &y0,
        &ex.coeffs,
        &ex.noise.fast,
        5000.0,
        0.01,
        true,
        &basis,
        &mut rng,
    )
    .unwrap();
    for (k, a) in alpha.iter().enumerate() {
        let values: Vec<f64> = traj.states().map(|s| s[k]).collect();
        let var = values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64;
        assert!(
            (var / (a / 2.0) - 1.0).abs() <= 0.1,
            "mode {}: variance {var} vs {}",
            k + 1,
            a / 2.0
        );
    }

    // mean over horizon 100 within three batch-means standard errors
    let window = 10_000;
    for k in 0..n {
        let values: Vec<f64> = traj.states().take(window).map(|s| s[k]).collect();
        let batches: Vec<f64> = values
            .chunks(window / 20)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        let (mean, se) = mean_and_stderr(&batches);
        assert!(mean.abs() <= 3.0 * se, "mode {}: mean {mean} se {se}", k + 1);
    }
}

fn drift_setup() -> (slowfast_core::ExampleSystem, slowfast_core::BasisSpec) {
    let n = 32;
    (example(BURGERS_OU_LEVY, n).unwrap(), build_basis(n, 2 * n + 1).unwrap())
}

#[test]
fn ergodic_and_analytic_drift_agree_at_constant_state() {
    let (ex, basis) = drift_setup();
    let mut opts = ErgodicOptions::new(200.0, 0.01);
    opts.burn_in = Some(10.0);
    let est = estimate_averaged_drift(
        &ex.x0,
        &ex.coeffs,
        &ex.noise.fast,
        &basis,
        &opts,
        &mut path_stream(777, 0, Channel::Frozen),
    )
    .unwrap();
    let analytic = analytic_averaged_drift(BURGERS_OU_LEVY).unwrap()(&ex.x0);
    let gap = est.drift_value.distance(&analytic);
    assert!(gap <= 0.05 * (1.0 + ex.x0.norm()), "gap {gap}");
}

#[test]
fn ergodic_estimate_forgets_initial_fast_state() {
    let (ex, basis) = drift_setup();
    let mut opts = ErgodicOptions::new(200.0, 0.01);
    opts.burn_in = Some(10.0);
    let a = estimate_averaged_drift(
        &ex.x0,
        &ex.coeffs,
        &ex.noise.fast,
        &basis,
        &opts,
        &mut path_stream(31, 0, Channel::Frozen),
    )
    .unwrap();
    opts.y0 = Some(SpectralField::constant(32, 5.0));
    let b = estimate_averaged_drift(
        &ex.x0,
        &ex.coeffs,
        &ex.noise.fast,
        &basis,
        &opts,
        &mut path_stream(31, 0, Channel::Frozen),
    )
    .unwrap();
    assert!(a.drift_value.distance(&b.drift_value) <= a.standard_error_norm());
}

#[test]
fn doubling_the_averaging_window_shrinks_the_standard_error() {
    let n = 8;
    let ex = example(BURGERS_OU_LEVY, n).unwrap();
    let basis = build_basis(n, 2 * n + 1).unwrap();
    let run = |horizon: f64| {
        let mut opts = ErgodicOptions::new(horizon, 0.01);
        opts.burn_in = Some(10.0);
        opts.batch_length = Some(5.0);
        estimate_averaged_drift(
            &ex.x0,
            &ex.coeffs,
            &ex.noise.fast,
            &basis,
            &opts,
            &mut path_stream(4242, 0, Channel::Frozen),
        )
        .unwrap()
        .standard_error_norm()
    };
    let ratio = run(1010.0) / run(2010.0);
    assert!((ratio / 2f64.sqrt() - 1.0).abs() <= 0.2, "ratio {ratio}");
}

#[test]
fn doubling_paths_shrinks_the_sweep_standard_error() {
    let n = 16;
    let setup = ExperimentSetup::from_example(BURGERS_OU_LEVY, n).unwrap();
    let mut cfg = SimulationConfig::new(0.1, 1e-3, 0.5, n);
    cfg.p_exponents = vec![3.0];
    cfg.mc_samples = 200;
    let small = run_convergence_sweep(&setup, &cfg, &[0.1], None, 1).unwrap();
    cfg.mc_samples = 400;
    let large = run_convergence_sweep(&setup, &cfg, &[0.1], None, 1).unwrap();
    let ratio = small.cells[0].stderr / large.cells[0].stderr;
    assert!((ratio / 2f64.sqrt() - 1.0).abs() <= 0.2, "ratio {ratio}");
}

#[test]
fn sweep_cells_account_for_every_path() {
    let n = 8;
    let setup = ExperimentSetup::from_example(BURGERS_OU_LEVY, n).unwrap();
    let mut cfg = SimulationConfig::new(0.1, 1e-3, 0.2, n);
    cfg.mc_samples = 10;
    let report = run_convergence_sweep(&setup, &cfg, &[0.1, 0.01], None, 2).unwrap();
    for c in &report.cells {
        assert_eq!(c.m_effective + c.exclusions, cfg.mc_samples);
        assert!(c.estimate >= 0.0 && c.stderr.is_finite());
        assert!((c.root_estimate - c.estimate.powf(2.0 / c.p)).abs() <= 1e-15);
    }
}
