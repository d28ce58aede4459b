//! Averaged drift `f̄₁(x) = ∫ f₁(x, y) μˣ(dy)` and checks of the structural
//! assumptions on the coefficients.

use std::fmt;
use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Result, SimError};
use crate::integrators::{draw_step, frozen_steps, FastStepper, FieldFn, SystemCoefficients, SystemNoise};
use crate::noise::{NoiseModel, StepNoise};
use crate::registry;
use crate::spectral::{BasisSpec, SpectralField};

/// Time average of `f₁(x, Yˣ_t)` along one frozen path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErgodicEstimate {
    pub drift_value: SpectralField,
    pub burn_in: f64,
    pub horizon: f64,
    /// Batch-means standard error, per mode.
    pub standard_error: Vec<f64>,
    pub batches: usize,
}

impl ErgodicEstimate {
    /// `(Σ_k se_k²)^{1/2}`, the standard error of the estimate in `L²`.
    pub fn standard_error_norm(&self) -> f64 {
        self.standard_error.iter().map(|s| s * s).sum::<f64>().sqrt()
    }

    /// `mode,value,stderr` rows, preceded by `# key=value` metadata lines.
    pub fn write_csv<W: Write>(&self, mut w: W, config_hash: &str) -> io::Result<()> {
        writeln!(w, "# config_hash={config_hash}")?;
        writeln!(
            w,
            "# burn_in={} horizon={} batches={}",
            self.burn_in, self.horizon, self.batches
        )?;
        writeln!(w, "mode,value,stderr")?;
        for (k, (v, s)) in self.drift_value.coeffs().iter().zip(&self.standard_error).enumerate() {
            writeln!(w, "{},{v:.12e},{s:.6e}", k + 1)?;
        }
        Ok(())
    }
}

/// Options of [`estimate_averaged_drift`].
#[derive(Clone, Debug)]
pub struct ErgodicOptions {
    /// Defaults to [`default_burn_in`].
    pub burn_in: Option<f64>,
    pub horizon: f64,
    pub dt: f64,
    /// Batch length for the standard error; defaults to 20 equal batches.
    pub batch_length: Option<f64>,
    pub exact_fast: bool,
    /// Start of the frozen path; zero when absent.
    pub y0: Option<SpectralField>,
}

impl ErgodicOptions {
    pub fn new(horizon: f64, dt: f64) -> Self {
        ErgodicOptions {
            burn_in: None,
            horizon,
            dt,
            batch_length: None,
            exact_fast: true,
            y0: None,
        }
    }
}

pub const DEFAULT_BATCHES: usize = 20;

/// Ten relaxation times of the frozen equation: `10/(cλ₁ + γ)` for a linear
/// fast drift `-γy + g(x)`, `10/η` otherwise.
pub fn default_burn_in(coeffs: &SystemCoefficients, basis: &BasisSpec) -> f64 {
    let lambda1 = basis.eigenvalues()[0];
    let rate = coeffs
        .fast_relaxation_rate(lambda1)
        .filter(|r| *r > 0.0)
        .unwrap_or_else(|| coeffs.dissipativity(lambda1));
    10.0 / rate
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Birkhoff average of `f₁(x, ·)` along one frozen fast path, with a
/// batch-means standard error.
pub fn estimate_averaged_drift<R: Rng>(
    x: &SpectralField,
    coeffs: &SystemCoefficients,
    fast_noise: &NoiseModel,
    basis: &BasisSpec,
    opts: &ErgodicOptions,
    rng: &mut R,
) -> Result<ErgodicEstimate> {
    let n = basis.n_modes();
    if x.len() != n {
        return Err(SimError::config("state does not match the basis"));
    }
    let lambda1 = basis.eigenvalues()[0];
    let eta = coeffs.dissipativity(lambda1);
    if eta <= 0.0 {
        return Err(SimError::config(format!("dissipativity fails: eta = {eta} <= 0")));
    }
    let burn_in = opts.burn_in.unwrap_or_else(|| default_burn_in(coeffs, basis));
    if !(burn_in >= 0.0) || !(opts.horizon > burn_in) {
        return Err(SimError::config(format!(
            "averaging horizon {} must exceed the burn-in {burn_in}",
            opts.horizon
        )));
    }
    if !(opts.dt > 0.0) {
        return Err(SimError::config("dt must be positive"));
    }
    let burn_steps = (burn_in / opts.dt).round() as usize;
    let total_steps = frozen_steps(opts.horizon, opts.dt)?;
    let avg_steps = total_steps.saturating_sub(burn_steps);
    let batches = match opts.batch_length {
        Some(b) if b > 0.0 => ((avg_steps as f64 * opts.dt) / b).floor() as usize,
        Some(_) => return Err(SimError::config("batch length must be positive")),
        None => DEFAULT_BATCHES,
    };
    if batches < 2 || avg_steps < batches {
        return Err(SimError::config(format!(
            "averaging window of {avg_steps} steps cannot be split into at least two batches"
        )));
    }
    let batch_size = avg_steps / batches;

    let exact = opts.exact_fast && matches!(coeffs.f2, crate::integrators::FastDrift::Linear { .. });
    if !exact && opts.dt > 0.1 {
        return Err(SimError::config("explicit frozen stepping needs dt <= 0.1"));
    }
    let stepper = FastStepper::new(basis, coeffs, fast_noise, opts.dt, 1.0, exact);
    let mut y = match &opts.y0 {
        Some(y0) if y0.len() == n => y0.clone(),
        Some(_) => return Err(SimError::config("initial fast state does not match the basis")),
        None => SpectralField::zeros(n),
    };

    let mut total = vec![CompensatedSum::default(); n];
    let mut batch = vec![CompensatedSum::default(); n];
    let mut batch_means: Vec<Vec<f64>> = Vec::with_capacity(batches);
    let (mut gauss, mut marks) = (Vec::new(), Vec::new());
    for i in 0..total_steps {
        if i >= burn_steps {
            let j = i - burn_steps;
            let f = coeffs.f1_value(x, &y);
            for (k, v) in f.coeffs().iter().enumerate() {
                total[k].add(*v);
                if j < batches * batch_size {
                    batch[k].add(*v);
                }
            }
            if j < batches * batch_size && (j + 1).is_multiple_of(batch_size) {
                batch_means.push(batch.iter().map(|s| s.value() / batch_size as f64).collect());
                batch.iter_mut().for_each(|s| *s = CompensatedSum::default());
            }
        }
        draw_step(fast_noise, fast_noise.levy_rate, opts.dt, rng, &mut gauss, &mut marks);
        y = stepper.advance(
            x,
            &y,
            StepNoise {
                gaussian: &gauss,
                marks: &marks,
            },
        );
        if !y.is_finite() {
            return Err(SimError::BlowUp {
                time: (i + 1) as f64 * opts.dt,
                seed: None,
                path: None,
            });
        }
    }

    let drift_value = SpectralField::new(total.iter().map(|s| s.value() / avg_steps as f64).collect());
    let b = batch_means.len() as f64;
    let standard_error = (0..n)
        .map(|k| {
            let mean = batch_means.iter().map(|m| m[k]).sum::<f64>() / b;
            let var = batch_means.iter().map(|m| (m[k] - mean).powi(2)).sum::<f64>() / (b - 1.0);
            (var / b).sqrt()
        })
        .collect();
    Ok(ErgodicEstimate {
        drift_value,
        burn_in,
        horizon: opts.horizon,
        standard_error,
        batches: batch_means.len(),
    })
}

/// Closed-form averaged drift of a built-in example.
pub fn analytic_averaged_drift(example_id: &str) -> Result<FieldFn> {
    let ex = registry::example(example_id, 1)?;
    ex.coeffs
        .analytic_fbar
        .ok_or_else(|| SimError::UnknownExample(format!("{example_id} (no closed-form averaged drift)")))
}

/// One of the four structural assumptions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Assumption {
    /// Growth and Lipschitz bounds on the drifts.
    A1,
    /// Moment and Lipschitz bounds on the jump coefficients.
    A2,
    /// Dissipativity `η = 2λ₁ − L_{f₂} − L_{h₂} > 0`.
    A3,
    /// Noise regularity `Σ α_k^ρ / λ_k^β < ∞` with `β(ρ−2)/ρ < 1`.
    A4,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub assumption: Assumption,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
    pub eta: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssumptionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, a: Assumption) -> &AssumptionCheck {
        self.checks
            .iter()
            .find(|c| c.assumption == a)
            .expect("all assumptions are checked")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "assumption,passed,detail")?;
        for c in &self.checks {
            writeln!(w, "{},{},\"{}\"", c.assumption, c.passed, c.detail.replace('"', "'"))?;
        }
        Ok(())
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let mark = if c.passed { "pass" } else { "FAIL" };
            writeln!(f, "({}) {mark}: {}", c.assumption, c.detail)?;
        }
        Ok(())
    }
}

/// Number of random pairs used for the sampled Lipschitz checks.
pub const VALIDATION_SAMPLES: usize = 1000;

const REL_SLACK: f64 = 1e-9;
const ABS_SLACK: f64 = 1e-12;

/// Random field with coefficients `s·ξ_k/k`, `s` log-uniform in `[10⁻², 10²]`.
fn random_field<R: Rng>(n: usize, rng: &mut R) -> SpectralField {
    let scale = 10f64.powf(rng.random_range(-2.0..2.0));
    SpectralField::new(
        (1..=n)
            .map(|k| {
                let g: f64 = StandardNormal.sample(rng);
                scale * g / k as f64
            })
            .collect(),
    )
}

fn perturb<R: Rng>(x: &SpectralField, rng: &mut R) -> SpectralField {
    let mut p = random_field(x.len(), rng);
    if rng.random_bool(0.5) {
        p = p.scaled(1e-3);
    }
    x + &p
}

/// Largest observed `lhs / rhs` ratio, tracked for the report.
#[derive(Default)]
struct WorstRatio {
    ratio: f64,
    violations: usize,
}

impl WorstRatio {
    fn observe(&mut self, lhs: f64, rhs: f64) {
        if lhs > rhs * (1.0 + REL_SLACK) + ABS_SLACK {
            self.violations += 1;
        }
        if rhs > 0.0 {
            self.ratio = self.ratio.max(lhs / rhs);
        } else if lhs > ABS_SLACK {
            self.ratio = f64::INFINITY;
        }
    }
}

fn check_drifts<R: Rng>(coeffs: &SystemCoefficients, n: usize, rng: &mut R) -> AssumptionCheck {
    let l = coeffs.lipschitz;
    let mut growth = [WorstRatio::default(), WorstRatio::default()];
    let mut lip = [WorstRatio::default(), WorstRatio::default()];
    for _ in 0..VALIDATION_SAMPLES {
        let (x1, y1) = (random_field(n, rng), random_field(n, rng));
        let (x2, y2) = (perturb(&x1, rng), perturb(&y1, rng));
        let d = x1.distance(&x2) + y1.distance(&y2);
        let size = 1.0 + x1.norm() + y1.norm();
        let f1 = (coeffs.f1_value(&x1, &y1), coeffs.f1_value(&x2, &y2));
        let f2 = (coeffs.f2.eval(&x1, &y1), coeffs.f2.eval(&x2, &y2));
        growth[0].observe(f1.0.norm(), l.f1 * size);
        growth[1].observe(f2.0.norm(), l.f2 * size);
        lip[0].observe(f1.0.distance(&f1.1), l.f1 * d);
        lip[1].observe(f2.0.distance(&f2.1), l.f2 * d);
    }
    let violations: usize = growth.iter().chain(&lip).map(|w| w.violations).sum();
    AssumptionCheck {
        assumption: Assumption::A1,
        passed: violations == 0,
        detail: format!(
            "{violations} violations in {VALIDATION_SAMPLES} pairs; worst ratio to declared bound: \
             f1 growth {:.3}, f1 Lipschitz {:.3}, f2 growth {:.3}, f2 Lipschitz {:.3}",
            growth[0].ratio, lip[0].ratio, growth[1].ratio, lip[1].ratio
        ),
    }
}

/// `∫ g(z)^γ μ(dz)` for a Lévy measure `rate · law`.
fn mark_integral(model: &NoiseModel, gamma: f64, g: impl Fn(f64) -> f64) -> f64 {
    if model.levy_rate == 0.0 {
        return 0.0;
    }
    model.levy_rate
        * model
            .marks
            .quadrature()
            .iter()
            .map(|(z, w)| w * g(*z).powf(gamma))
            .sum::<f64>()
}

const JUMP_EXPONENTS: [f64; 3] = [1.0, 2.0, 4.0];

fn check_jumps<R: Rng>(
    coeffs: &SystemCoefficients,
    noise: &SystemNoise,
    basis: &BasisSpec,
    rng: &mut R,
) -> AssumptionCheck {
    let n = basis.n_modes();
    let l = coeffs.lipschitz;
    let mut h1_lip = WorstRatio::default();
    let mut h1_reg = WorstRatio::default();
    let mut h2_lip = WorstRatio::default();
    let mut finite = true;
    for _ in 0..VALIDATION_SAMPLES {
        let (x1, y1) = (random_field(n, rng), random_field(n, rng));
        let (x2, y2) = (perturb(&x1, rng), perturb(&y1, rng));
        let zero = SpectralField::zeros(n);
        for gamma in JUMP_EXPONENTS {
            if let Some(h1) = &coeffs.h1 {
                let lhs = mark_integral(&noise.slow, gamma, |z| h1.eval(&x1, z).distance(&h1.eval(&x2, z)));
                h1_lip.observe(lhs, l.h1 * x1.distance(&x2).powf(gamma));
                let reg = mark_integral(&noise.slow, gamma, |z| basis.h_alpha_norm(&h1.eval(&x1, z), 1.0));
                h1_reg.observe(reg, l.h1 * (1.0 + basis.h_alpha_norm(&x1, 1.0).powf(gamma)));
                finite &= mark_integral(&noise.slow, gamma, |z| h1.eval(&zero, z).norm()).is_finite();
            }
            if let Some(h2) = &coeffs.h2 {
                let lhs = mark_integral(&noise.fast, gamma, |z| {
                    h2.eval(&x1, &y1, z).distance(&h2.eval(&x2, &y2, z))
                });
                let rhs = l.h2 * (x1.distance(&x2).powf(gamma) + y1.distance(&y2).powf(gamma));
                h2_lip.observe(lhs, rhs);
                finite &= mark_integral(&noise.fast, gamma, |z| h2.eval(&zero, &zero, z).norm()).is_finite();
            }
        }
    }
    let violations = h1_lip.violations + h1_reg.violations + h2_lip.violations;
    AssumptionCheck {
        assumption: Assumption::A2,
        passed: violations == 0 && finite,
        detail: format!(
            "{violations} violations in {VALIDATION_SAMPLES} pairs x gamma in {JUMP_EXPONENTS:?}; worst ratio: \
             h1 Lipschitz {:.3}, h1 H^1 growth {:.3}, h2 Lipschitz {:.3}{}",
            h1_lip.ratio,
            h1_reg.ratio,
            h2_lip.ratio,
            if finite {
                ""
            } else {
                "; moment at the origin is not finite"
            }
        ),
    }
}

fn check_dissipativity(coeffs: &SystemCoefficients, basis: &BasisSpec) -> (AssumptionCheck, f64) {
    let lambda1 = basis.eigenvalues()[0];
    let eta = coeffs.dissipativity(lambda1);
    let check = AssumptionCheck {
        assumption: Assumption::A3,
        passed: eta > 0.0,
        detail: format!(
            "eta = 2*{lambda1:.6} - {} - {} = {eta:.6}",
            coeffs.lipschitz.f2, coeffs.lipschitz.h2
        ),
    };
    (check, eta)
}

/// Truncated `Σ α_k^ρ / λ_k^β`, and the fitted decay exponent of its terms
/// over the upper half of the modes.
fn regularity_sum(model: &NoiseModel, basis: &BasisSpec, beta: f64, rho: f64) -> (f64, Option<f64>) {
    let terms: Vec<f64> = model
        .q_coeffs
        .iter()
        .zip(basis.eigenvalues())
        .map(|(a, l)| a.powf(rho) / l.powf(beta))
        .collect();
    let sum = terms.iter().sum();
    let tail: Vec<(f64, f64)> = terms
        .iter()
        .enumerate()
        .skip(terms.len() / 2)
        .filter(|(_, t)| **t > 0.0)
        .map(|(k, t)| (((k + 1) as f64).ln(), t.ln()))
        .collect();
    (sum, crate::experiments::least_squares_slope(&tail))
}

fn check_regularity(noise: &SystemNoise, basis: &BasisSpec) -> AssumptionCheck {
    let mut passed = true;
    let mut parts = Vec::new();
    for (label, model) in [("Q1", &noise.slow), ("Q2", &noise.fast)] {
        if !model.has_gaussian() {
            parts.push(format!("{label}: no Gaussian part"));
            continue;
        }
        let Some(reg) = model.regularity else {
            passed = false;
            parts.push(format!("{label}: no (beta, rho) declared"));
            continue;
        };
        let exponent = reg.beta * (reg.rho - 2.0) / reg.rho;
        let ranges_ok = reg.beta > 0.0 && reg.rho > 2.0 && exponent < 1.0;
        let (sum, slope) = regularity_sum(model, basis, reg.beta, reg.rho);
        let decays = slope.is_none_or(|s| s < -1.0);
        passed &= ranges_ok && sum.is_finite() && decays;
        parts.push(format!(
            "{label}: beta = {}, rho = {}, beta(rho-2)/rho = {exponent:.4}, truncated sum = {sum:.6e}, tail slope = {}",
            reg.beta,
            reg.rho,
            slope.map_or("n/a".to_string(), |s| format!("{s:.3}"))
        ));
    }
    AssumptionCheck {
        assumption: Assumption::A4,
        passed,
        detail: parts.join("; "),
    }
}

/// Check (A1)–(A4) for the given coefficients and noise. The Lipschitz and
/// growth bounds are sampled on random pairs; (A3) and (A4) are exact on the
/// declared constants and the truncated sums.
pub fn validate_assumptions<R: Rng>(
    coeffs: &SystemCoefficients,
    noise: &SystemNoise,
    basis: &BasisSpec,
    rng: &mut R,
) -> ValidationReport {
    let n = basis.n_modes();
    let (a3, eta) = check_dissipativity(coeffs, basis);
    ValidationReport {
        checks: vec![
            check_drifts(coeffs, n, rng),
            check_jumps(coeffs, noise, basis, rng),
            a3,
            check_regularity(noise, basis),
        ],
        eta,
    }
}
