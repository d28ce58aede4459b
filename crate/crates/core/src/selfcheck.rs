//! Quick deterministic checks of the numerical building blocks against
//! closed-form answers.

use std::f64::consts::{PI, SQRT_2};

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::averaging::validate_assumptions;
use crate::experiments::{run_convergence_sweep, sup_error_path, ExperimentSetup};
use crate::integrators::{
    simulate_slow_fast, FastDrift, FastStepper, PathSeed, RecordOptions, SimulationConfig, SystemCoefficients,
    SystemNoise, Trajectory,
};
use crate::noise::{path_stream, sample_qwiener_increment, Channel, MarkLaw, NoiseModel, StepNoise};
use crate::registry::{example, BURGERS_OU_LEVY, HEAT};
use crate::spectral::{build_basis, BasisSpec, SpectralField};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelfCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> SelfCheck {
    SelfCheck { name, passed, detail }
}

fn random_fields(n: usize, count: usize, stream: u64) -> Vec<SpectralField> {
    let mut rng = path_stream(0x5e1f, stream, Channel::Validation);
    (0..count)
        .map(|_| {
            SpectralField::new(
                (1..=n)
                    .map(|k| {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        g / k as f64
                    })
                    .collect(),
            )
        })
        .collect()
}

fn transform_round_trip(basis: &BasisSpec) -> SelfCheck {
    let worst = random_fields(basis.n_modes(), 20, 0)
        .iter()
        .map(|f| basis.to_spectral(&basis.to_physical(f)).distance(f))
        .fold(0.0, f64::max);
    check(
        "sine transform round trip",
        worst <= 1e-12,
        format!("max error {worst:.2e}"),
    )
}

fn semigroup_value(basis: &BasisSpec) -> SelfCheck {
    let out = basis.semigroup_apply(&SpectralField::mode(basis.n_modes(), 1, 1.0), 0.1, 1.0);
    let err = (out[0] - (-0.1 * PI * PI).exp()).abs();
    check(
        "heat semigroup on the first mode",
        err <= 1e-15,
        format!("error {err:.2e}"),
    )
}

fn nonlinearity_of_first_mode(basis: &BasisSpec) -> SelfCheck {
    let n = basis.n_modes();
    let out = basis.burgers_nonlinearity(&SpectralField::mode(n, 1, 1.0));
    let expect = SpectralField::mode(n, 2, PI / SQRT_2);
    let err = out.distance(&expect);
    check(
        "Burgers term of the first mode",
        err <= 1e-12,
        format!("error {err:.2e}"),
    )
}

fn trilinear_identities(basis: &BasisSpec) -> SelfCheck {
    let mut energy = 0.0f64;
    for x in random_fields(basis.n_modes(), 20, 1) {
        energy = energy.max(basis.burgers_nonlinearity(&x).dot(&x).abs());
        energy = energy.max(basis.trilinear_b(&x, &x, &x).abs());
    }
    check(
        "energy neutrality of the Burgers term",
        energy <= 1e-10,
        format!("max |<B(x),x>|, |b(x,x,x)| = {energy:.2e}"),
    )
}

fn exact_ou_transition(basis: &BasisSpec) -> SelfCheck {
    let n = basis.n_modes();
    let mut coeffs = SystemCoefficients::heat();
    coeffs.f2 = FastDrift::Linear {
        damping: 1.0,
        forcing: None,
    };
    let noise = NoiseModel::power_law(n, 1.0, 2.0, 0.0, MarkLaw::default());
    let (dt, eps) = (1e-2, 1e-3);
    let stepper = FastStepper::new(basis, &coeffs, &noise, dt, eps, true);
    let y = SpectralField::constant(n, 1.0);
    let xi: Vec<f64> = (0..n).map(|k| 0.1 * k as f64 - 0.3).collect();
    let out = stepper.advance(
        &SpectralField::zeros(n),
        &y,
        StepNoise {
            gaussian: &xi,
            marks: &[],
        },
    );
    let r = dt / eps;
    let err = (0..n)
        .map(|k| {
            let expect = (-r).exp() * y[k] + ((1.0 - (-2.0 * r).exp()) / 2.0).sqrt() * noise.q_coeffs[k].sqrt() * xi[k];
            (out[k] - expect).abs()
        })
        .fold(0.0, f64::max);
    check(
        "exact Ornstein-Uhlenbeck step",
        err <= 1e-14,
        format!("max error {err:.2e}"),
    )
}

fn linear_skeleton(basis: &BasisSpec) -> SelfCheck {
    let n = basis.n_modes();
    let heat = example(HEAT, n).expect("built-in example");
    let x0 = random_fields(n, 1, 2).remove(0);
    let cfg = SimulationConfig::new(0.5, 1e-3, 0.5, n);
    let run = simulate_slow_fast(
        &x0,
        &SpectralField::zeros(n),
        &heat.coeffs,
        &SystemNoise::silent(n),
        &cfg,
        basis,
        PathSeed { master: 0, path: 0 },
        RecordOptions::default(),
    );
    match run {
        Ok(run) => {
            let worst = (0..run.x.len())
                .map(|i| run.x.field(i).distance(&basis.semigroup_apply(&x0, run.x.time(i), 1.0)))
                .fold(0.0, f64::max);
            check(
                "linear skeleton against the semigroup",
                worst <= 1e-12,
                format!("max error {worst:.2e}"),
            )
        }
        Err(e) => check("linear skeleton against the semigroup", false, e.to_string()),
    }
}

fn sup_error_examples() -> SelfCheck {
    let zero = Trajectory::new(0.1, &SpectralField::zeros(2));
    let mut a = zero.clone();
    a.push(&SpectralField::zeros(2));
    let mut b = Trajectory::new(0.1, &SpectralField::mode(2, 1, 0.5));
    b.push(&SpectralField::mode(2, 1, 0.5));
    let same = sup_error_path(&a, &a, 3.0).unwrap_or(f64::NAN);
    let half = sup_error_path(&a, &b, 2.0).unwrap_or(f64::NAN);
    check(
        "sup-error on fixed trajectories",
        same == 0.0 && (half - 0.25).abs() < 1e-15,
        format!("identical {same}, constant 0.5 offset {half}"),
    )
}

fn qwiener_variance() -> SelfCheck {
    let model = NoiseModel::power_law(4, 1.0, 2.0, 0.0, MarkLaw::default());
    let mut rng = path_stream(0x5e1f, 3, Channel::Validation);
    let draws = 100_000;
    let dt = 1e-2;
    let mut sums = [0.0f64; 4];
    for _ in 0..draws {
        let inc = sample_qwiener_increment(&model, dt, &mut rng);
        for (s, v) in sums.iter_mut().zip(inc.coeffs()) {
            *s += v * v;
        }
    }
    let worst = sums
        .iter()
        .zip(&model.q_coeffs)
        .map(|(s, a)| (s / draws as f64 / (a * dt) - 1.0).abs())
        .fold(0.0, f64::max);
    check(
        "Q-Wiener increment variance",
        worst <= 0.05,
        format!("max relative error {worst:.4}"),
    )
}

fn coupling_sanity() -> SelfCheck {
    let n = 8;
    let result = ExperimentSetup::from_example(BURGERS_OU_LEVY, n).and_then(|s| {
        let setup = s.with_averaged_slow_drift();
        let mut cfg = SimulationConfig::new(0.1, 1e-3, 0.1, n);
        cfg.mc_samples = 4;
        run_convergence_sweep(&setup, &cfg, &[0.1, 0.01], None, 1)
    });
    match result {
        Ok(r) => {
            let worst = r.cells.iter().map(|c| c.estimate).fold(0.0, f64::max);
            check(
                "coupled equations with averaged drift coincide",
                worst <= 1e-12,
                format!("max error {worst:.2e}"),
            )
        }
        Err(e) => check("coupled equations with averaged drift coincide", false, e.to_string()),
    }
}

fn worked_example_assumptions(basis: &BasisSpec) -> SelfCheck {
    let ex = example(BURGERS_OU_LEVY, basis.n_modes()).expect("built-in example");
    let report = validate_assumptions(
        &ex.coeffs,
        &ex.noise,
        basis,
        &mut path_stream(0x5e1f, 4, Channel::Validation),
    );
    let eta_ok = (report.eta - (2.0 * PI * PI - 1.0)).abs() < 1e-12;
    check(
        "assumptions of the worked example",
        report.passed() && eta_ok,
        format!("eta = {:.6}, failures: {}", report.eta, report.failures().count()),
    )
}

/// Run every check.
pub fn run_selfcheck() -> Vec<SelfCheck> {
    let basis = build_basis(16, 33).expect("valid basis");
    vec![
        transform_round_trip(&basis),
        semigroup_value(&basis),
        nonlinearity_of_first_mode(&basis),
        trilinear_identities(&basis),
        exact_ou_transition(&basis),
        linear_skeleton(&basis),
        sup_error_examples(),
        qwiener_variance(),
        coupling_sanity(),
        worked_example_assumptions(&basis),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_selfcheck() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
