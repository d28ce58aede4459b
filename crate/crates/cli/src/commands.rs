//! Command dispatch.

use std::io::Write;
use std::path::PathBuf;

use slowfast_core::averaging::{estimate_averaged_drift, validate_assumptions, ErgodicOptions};
use slowfast_core::experiments::{
    run_auxiliary_gap, run_convergence_sweep, run_increment_diagnostic, run_moment_diagnostics, sup_error_path,
    ExperimentSetup, SlopeReport, MIN_RELIABLE_SAMPLES,
};
use slowfast_core::integrators::default_delta;
use slowfast_core::noise::{path_stream, Channel};
use slowfast_core::selfcheck::run_selfcheck;
use slowfast_core::{simulate_averaged, simulate_slow_fast, PathSeed, RecordOptions, Trajectory};

use crate::config::{resolve, FileConfig, ResolvedConfig};
use crate::error::CliError;
use crate::manifest::RunOutput;
use crate::{Cli, Command, DiagnosticKind};

/// Smallest log-log slope accepted by the increment and auxiliary gates.
pub const SLOPE_GATE: f64 = 0.8;

/// The sweep error at the smallest ε must be below this fraction of the
/// error at the largest.
pub const SWEEP_FACTOR: f64 = 0.5;

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Execute a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Selfcheck = cli.command {
        return selfcheck();
    }
    let c = &cli.common;
    let file = match &c.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let resolved = resolve(&file, &c.overrides())?;
    if c.dump {
        print!("{}", resolved.to_toml()?);
        return Ok(());
    }
    let setup = resolved.setup()?;
    let threads = c.threads.unwrap_or_else(default_threads).max(1);
    let dir = c
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(cli.command.name()));

    let report = validate_assumptions(
        &setup.coeffs,
        &setup.noise,
        &resolved.simulation.basis()?,
        &mut path_stream(resolved.simulation.seed, 0, Channel::Validation),
    );
    let failures: Vec<String> = report
        .failures()
        .map(|f| format!("assumption ({}) violated: {}", f.assumption, f.detail))
        .collect();
    if !failures.is_empty() && !c.force {
        return Err(CliError::Validation(format!(
            "{}; pass --force to run anyway",
            failures.join("; ")
        )));
    }

    let mut out = RunOutput::start(&dir, cli.command.name(), &resolved, threads)?;
    for f in &failures {
        out.warn(&format!("{f} (continuing because of --force)"));
    }
    log::info!("{} into {} (config {})", cli.command.name(), dir.display(), out.hash());
    let hash = out.hash().to_string();
    let result = out
        .artifact("assumptions.csv", |w| {
            writeln!(w, "# config_hash={hash}")?;
            report.write_csv(w)
        })
        .and_then(|_| match &cli.command {
            Command::Simulate { stride, physical } => simulate(&mut out, &resolved, &setup, *stride, *physical),
            Command::Sweep => sweep(&mut out, &resolved, &setup, threads),
            Command::Drift => drift(&mut out, &resolved, &setup),
            Command::Diagnose { kind } => diagnose(&mut out, &resolved, &setup, *kind, threads),
            Command::Selfcheck => unreachable!(),
        });
    out.finish(&result)?;
    result
}

fn selfcheck() -> Result<(), CliError> {
    let checks = run_selfcheck();
    let failed = checks.iter().filter(|c| !c.passed).count();
    for c in &checks {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("selfcheck: {} passed, {failed} failed", checks.len() - failed);
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Gate(format!("{failed} self-check(s) failed")))
    }
}

fn write_trajectory(
    w: &mut dyn Write,
    hash: &str,
    t: &Trajectory,
    physical: Option<&slowfast_core::BasisSpec>,
    stride: usize,
) -> std::io::Result<()> {
    writeln!(w, "# config_hash={hash}")?;
    t.write_csv(w, physical, stride)
}

fn simulate(
    out: &mut RunOutput,
    r: &ResolvedConfig,
    setup: &ExperimentSetup,
    stride: usize,
    physical: bool,
) -> Result<(), CliError> {
    let cfg = &r.simulation;
    if let Some(w) = cfg.cfl_warning(&setup.coeffs) {
        out.warn(&w);
    }
    let basis = cfg.basis()?;
    let seed = PathSeed {
        master: cfg.seed,
        path: 0,
    };
    let run = simulate_slow_fast(
        &setup.x0,
        &setup.y0,
        &setup.coeffs,
        &setup.noise,
        cfg,
        &basis,
        seed,
        RecordOptions { fast_trajectory: true },
    )?;
    let avg = simulate_averaged(
        &setup.x0,
        &*setup.fbar,
        &setup.coeffs,
        &setup.noise.slow,
        cfg,
        &basis,
        &run.slow_noise,
    )
    .map_err(|e| e.with_origin(seed.master, seed.path))?;
    let hash = out.hash().to_string();
    let grid = physical.then_some(&basis);
    out.artifact("slow.csv", |w| write_trajectory(w, &hash, &run.x, grid, stride))?;
    if let Some(y) = &run.y {
        out.artifact("fast.csv", |w| write_trajectory(w, &hash, y, grid, stride))?;
    }
    out.artifact("averaged.csv", |w| write_trajectory(w, &hash, &avg, grid, stride))?;
    let sup = sup_error_path(&run.x, &avg, 2.0)?.sqrt();
    println!(
        "simulated {} steps to T = {} (epsilon {}, seed {}): |X_T| = {:.6e}, sup_t |X - Xbar| = {sup:.6e}",
        cfg.steps(),
        cfg.horizon,
        cfg.epsilon,
        cfg.seed,
        run.x.last().norm()
    );
    Ok(())
}

/// A failed gate is an error for `M ≥ 30` and a warning below.
fn gate(out: &mut RunOutput, m: usize, passed: bool, what: String) -> Option<String> {
    if passed {
        None
    } else if m < MIN_RELIABLE_SAMPLES {
        out.warn(&format!(
            "{what} (gate not enforced with M = {m} < {MIN_RELIABLE_SAMPLES})"
        ));
        None
    } else {
        Some(what)
    }
}

fn gates_result(failures: Vec<String>) -> Result<(), CliError> {
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Gate(failures.join("; ")))
    }
}

fn sweep(out: &mut RunOutput, r: &ResolvedConfig, setup: &ExperimentSetup, threads: usize) -> Result<(), CliError> {
    let mut report = run_convergence_sweep(setup, &r.simulation, &r.sweep.epsilons, None, threads)?;
    report.config_hash = out.hash().to_string();
    for w in &report.warnings {
        out.warn(w);
    }
    out.artifact("errors.csv", |w| report.write_csv(w))?;
    out.artifact("errors.svg", |w| report.write_svg(w))?;
    for c in &report.cells {
        println!(
            "epsilon {:<8e} p {:<3} E sup|X - Xbar|^p = {:.4e} ± {:.1e}  (^(2/p): {:.4e})  M = {}, excluded {}",
            c.epsilon, c.p, c.estimate, c.stderr, c.root_estimate, c.m_effective, c.exclusions
        );
    }
    let mut failures = Vec::new();
    for p in report.exponents() {
        let series = report.series(p);
        let (largest, smallest) = (series[0].estimate, series[series.len() - 1].estimate);
        let ok = report.strictly_decreasing(p) && (series.len() < 2 || smallest < SWEEP_FACTOR * largest);
        failures.extend(gate(
            out,
            report.mc_samples,
            ok,
            format!(
                "error for p = {p} is not strictly decreasing in epsilon with a final drop below {SWEEP_FACTOR} \
                 times the first ({largest:.3e} -> {smallest:.3e})"
            ),
        ));
    }
    gates_result(failures)
}

fn drift(out: &mut RunOutput, r: &ResolvedConfig, setup: &ExperimentSetup) -> Result<(), CliError> {
    let a = &r.averaging;
    let mut opts = ErgodicOptions::new(a.horizon, a.dt);
    opts.burn_in = Some(a.burn_in);
    opts.batch_length = a.batch_length;
    opts.exact_fast = r.simulation.exact_fast;
    opts.y0 = Some(setup.y0.clone());
    let basis = r.simulation.basis()?;
    let mut rng = path_stream(r.simulation.seed, 0, Channel::Frozen);
    let est = estimate_averaged_drift(&setup.x0, &setup.coeffs, &setup.noise.fast, &basis, &opts, &mut rng)?;
    let hash = out.hash().to_string();
    out.artifact("drift.csv", |w| est.write_csv(w, &hash))?;
    let closed = (setup.fbar)(&setup.x0);
    println!(
        "averaged drift at x0: |estimate| = {:.6e}, standard error {:.3e}, relative distance to closed form {:.4}",
        est.drift_value.norm(),
        est.standard_error_norm(),
        est.drift_value.distance(&closed) / closed.norm().max(f64::MIN_POSITIVE)
    );
    Ok(())
}

fn print_slope(report: &SlopeReport) {
    for ((s, m), e) in report.scales.iter().zip(&report.means).zip(&report.stderrs) {
        println!("{} {s:<8e} mean {m:.4e} ± {e:.1e}", report.label);
    }
    match report.slope {
        Some(s) => println!("{} log-log slope {s:.3}", report.label),
        None => println!("{} log-log slope undefined", report.label),
    }
}

fn diagnose(
    out: &mut RunOutput,
    r: &ResolvedConfig,
    setup: &ExperimentSetup,
    kind: DiagnosticKind,
    threads: usize,
) -> Result<(), CliError> {
    let d = &r.diagnostics;
    let m = r.simulation.mc_samples;
    let all = kind == DiagnosticKind::All;
    let mut failures = Vec::new();

    if all || kind == DiagnosticKind::Moments {
        let mut report = run_moment_diagnostics(setup, &r.simulation, &d.moment_orders, &d.epsilons, threads)?;
        report.config_hash = out.hash().to_string();
        for w in &report.warnings {
            out.warn(w);
        }
        out.artifact("moments.csv", |w| report.write_csv(w))?;
        for row in &report.rows {
            println!(
                "moments epsilon {:<8e} q {} E sup|X|^2q = {:.4e} ± {:.1e}, sup E|Y|^2q = {:.4e}",
                row.epsilon, row.q, row.sup_slow, row.sup_slow_stderr, row.sup_mean_fast
            );
        }
        let what = format!(
            "moments vary by more than a factor 2 across epsilon: {}",
            report.flags.join(", ")
        );
        failures.extend(gate(out, m, report.stable(), what));
    }

    if all || kind == DiagnosticKind::Increment {
        let mut cfg = r.simulation.clone();
        cfg.dt = d.increment_dt;
        cfg.delta = default_delta(cfg.epsilon, cfg.dt, cfg.horizon);
        let mut report = run_increment_diagnostic(setup, &cfg, d.increment_time, &d.increment_lags, threads)?;
        report.config_hash = out.hash().to_string();
        for w in &report.warnings {
            out.warn(w);
        }
        out.artifact("increment.csv", |w| report.write_csv(w))?;
        print_slope(&report);
        let what = format!("increment slope {:?} below {SLOPE_GATE}", report.slope);
        failures.extend(gate(out, m, report.slope_at_least(SLOPE_GATE), what));
    }

    if all || kind == DiagnosticKind::Auxiliary {
        let mut report = run_auxiliary_gap(setup, &r.simulation, &d.deltas, threads)?;
        report.config_hash = out.hash().to_string();
        for w in &report.warnings {
            out.warn(w);
        }
        out.artifact("auxiliary.csv", |w| report.write_csv(w))?;
        print_slope(&report);
        if report.means.iter().all(|v| *v == 0.0) {
            println!("auxiliary gap is identically zero: the fast drift does not depend on the slow state");
        } else {
            let ok = report.slope_at_least(SLOPE_GATE) && report.strictly_decreasing();
            let what = format!(
                "auxiliary gap slope {:?} below {SLOPE_GATE} or not decreasing in delta",
                report.slope
            );
            failures.extend(gate(out, m, ok, what));
        }
    }
    gates_result(failures)
}
