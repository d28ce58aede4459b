//! Exponential-Euler time stepping of the mild formulation.
//!
//! Per step of length `dt`, the slow component is advanced as
//!
//! ```text
//! X ← e^{dt Δ} [ X + dt (B(X) + f₁(X, Y)) + ΔW^{Q₁} + J₁(X) ]
//! ```
//!
//! and the fast component as
//!
//! ```text
//! Y ← e^{(dt/ε) c Δ} [ Y + (dt/ε) f₂(X, Y) + ε^{-1/2} ΔW^{Q₂} + J₂(X, Y) ]
//! ```
//!
//! with all non-linear terms, noise and jumps evaluated at the left endpoint.
//! `J` is the compensated jump sum of the step; the fast jumps arrive at
//! intensity `λ₂/ε`. When the fast drift is linear in `y`
//! (`f₂(x, y) = -γ y + g(x)`) the fast step can instead use the exact
//! Ornstein–Uhlenbeck transition, which stays accurate for any `dt/ε`.

use std::io::{self, Write};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::noise::{
    compensated_jump_contribution, mark_expectation_of, path_stream, Channel, JumpCoefficient, NoiseModel, NoisePath,
    StepNoise,
};
use crate::spectral::{BasisSpec, SpectralField};

/// `(x, y) ↦ field`
pub type DriftFn = Arc<dyn Fn(&SpectralField, &SpectralField) -> SpectralField + Send + Sync>;
/// `x ↦ field`
pub type FieldFn = Arc<dyn Fn(&SpectralField) -> SpectralField + Send + Sync>;

/// Fast drift `f₂`.
#[derive(Clone)]
pub enum FastDrift {
    /// `f₂(x, y) = -damping · y + forcing(x)`; `None` forcing is zero.
    Linear {
        damping: f64,
        forcing: Option<FieldFn>,
    },
    General(DriftFn),
}

impl FastDrift {
    pub fn eval(&self, x: &SpectralField, y: &SpectralField) -> SpectralField {
        match self {
            FastDrift::Linear { damping, forcing } => {
                let mut out = y.scaled(-damping);
                if let Some(g) = forcing {
                    out.add_scaled(1.0, &g(x));
                }
                out
            }
            FastDrift::General(f) => f(x, y),
        }
    }
}

type FastJumpFn = Arc<dyn Fn(&SpectralField, &SpectralField, f64) -> SpectralField + Send + Sync>;

/// Fast jump coefficient `h₂(x, y, z)`.
#[derive(Clone)]
pub struct FastJumpCoefficient {
    eval: FastJumpFn,
    mark_linear: bool,
}

impl FastJumpCoefficient {
    pub fn new(f: impl Fn(&SpectralField, &SpectralField, f64) -> SpectralField + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(f),
            mark_linear: false,
        }
    }

    /// `h₂(x, y, z) = z · g(x, y)`.
    pub fn mark_linear(g: impl Fn(&SpectralField, &SpectralField) -> SpectralField + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(move |x, y, z| g(x, y).scaled(z)),
            mark_linear: true,
        }
    }

    pub fn eval(&self, x: &SpectralField, y: &SpectralField, z: f64) -> SpectralField {
        (self.eval)(x, y, z)
    }

    pub fn is_mark_linear(&self) -> bool {
        self.mark_linear
    }
}

/// Declared Lipschitz constants of the coefficients.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LipschitzConstants {
    pub f1: f64,
    pub f2: f64,
    pub h1: f64,
    pub h2: f64,
}

/// Coefficients of the slow-fast system. The slow viscosity is fixed to 1.
#[derive(Clone)]
pub struct SystemCoefficients {
    /// Include the Burgers term `½ ∂_ξ (X²)`.
    pub advection: bool,
    /// Slow forcing `f₁(x, y)`; `None` is zero.
    pub f1: Option<DriftFn>,
    pub f2: FastDrift,
    pub h1: Option<JumpCoefficient>,
    pub h2: Option<FastJumpCoefficient>,
    pub lipschitz: LipschitzConstants,
    /// Fast diffusion coefficient `c ≥ 0`.
    pub fast_diffusion: f64,
    /// Closed-form averaged drift, when known.
    pub analytic_fbar: Option<FieldFn>,
}

impl SystemCoefficients {
    /// Heat equation in the slow variable, inert fast variable.
    pub fn heat() -> Self {
        SystemCoefficients {
            advection: false,
            f1: None,
            f2: FastDrift::Linear {
                damping: 1.0,
                forcing: None,
            },
            h1: None,
            h2: None,
            lipschitz: LipschitzConstants {
                f1: 0.0,
                f2: 1.0,
                h1: 0.0,
                h2: 0.0,
            },
            fast_diffusion: 0.0,
            analytic_fbar: Some(Arc::new(|x: &SpectralField| SpectralField::zeros(x.len()))),
        }
    }

    pub fn f1_value(&self, x: &SpectralField, y: &SpectralField) -> SpectralField {
        match &self.f1 {
            Some(f) => f(x, y),
            None => SpectralField::zeros(x.len()),
        }
    }

    /// `η = 2λ₁ − L_{f₂} − L_{h₂}`.
    pub fn dissipativity(&self, lambda1: f64) -> f64 {
        2.0 * lambda1 - self.lipschitz.f2 - self.lipschitz.h2
    }

    /// Slowest relaxation rate of the frozen fast equation, when it is known
    /// in closed form (linear fast drift).
    pub fn fast_relaxation_rate(&self, lambda1: f64) -> Option<f64> {
        match self.f2 {
            FastDrift::Linear { damping, .. } => Some(self.fast_diffusion * lambda1 + damping),
            FastDrift::General(_) => None,
        }
    }
}

/// Noise models of the two components.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemNoise {
    /// `W^{Q₁}` and `N₁`.
    pub slow: NoiseModel,
    /// `W^{Q₂}` and `N₂` (the latter at intensity `λ₂/ε` in the coupled system).
    pub fast: NoiseModel,
}

impl SystemNoise {
    pub fn silent(n_modes: usize) -> Self {
        SystemNoise {
            slow: NoiseModel::silent(n_modes),
            fast: NoiseModel::silent(n_modes),
        }
    }
}

/// Run parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Scale separation, in (0, 1).
    pub epsilon: f64,
    /// Breakpoint spacing of the auxiliary process; a multiple of `dt`.
    pub delta: f64,
    pub dt: f64,
    /// Horizon `T`.
    pub horizon: f64,
    pub n_modes: usize,
    pub grid_size: usize,
    pub mc_samples: usize,
    pub p_exponents: Vec<f64>,
    pub seed: u64,
    /// Use the exact OU transition for a linear fast drift.
    pub exact_fast: bool,
}

/// Whole number of `step`s in `span`, if `span` is (numerically) one.
pub fn whole_steps(span: f64, step: f64) -> Option<usize> {
    let r = span / step;
    let n = r.round();
    if n >= 0.0 && (r - n).abs() <= 1e-9 * r.abs().max(1.0) {
        Some(n as usize)
    } else {
        None
    }
}

/// `δ = ε^{1/2}`, capped at the horizon and snapped to the nearest positive
/// multiple of `dt`.
pub fn default_delta(epsilon: f64, dt: f64, horizon: f64) -> f64 {
    let mut d = epsilon.sqrt();
    if horizon > 0.0 {
        d = d.min(horizon);
    }
    let n = (d / dt).round().max(1.0);
    n * dt
}

pub const DEFAULT_SEED: u64 = 12345;

impl SimulationConfig {
    /// Config with `δ = ε^{1/2}` (snapped to the step grid) and the remaining
    /// fields at their defaults.
    pub fn new(epsilon: f64, dt: f64, horizon: f64, n_modes: usize) -> Self {
        SimulationConfig {
            epsilon,
            delta: default_delta(epsilon, dt, horizon),
            dt,
            horizon,
            n_modes,
            grid_size: 2 * n_modes + 1,
            mc_samples: 200,
            p_exponents: vec![3.0, 4.0],
            seed: DEFAULT_SEED,
            exact_fast: true,
        }
    }

    /// Same config at another ε, with δ re-derived from it.
    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        let mut c = self.clone();
        c.epsilon = epsilon;
        c.delta = default_delta(epsilon, self.dt, self.horizon);
        c
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(SimError::config(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(SimError::config(format!(
                "horizon must be non-negative, got {}",
                self.horizon
            )));
        }
        if self.horizon > 0.0 {
            if self.dt > self.horizon {
                return Err(SimError::config("dt exceeds the horizon"));
            }
            if whole_steps(self.horizon, self.dt).is_none() {
                return Err(SimError::config(format!(
                    "horizon {} is not a whole number of steps of {}",
                    self.horizon, self.dt
                )));
            }
            if self.delta > self.horizon * (1.0 + 1e-12) {
                return Err(SimError::config(format!("delta {} exceeds the horizon", self.delta)));
            }
        }
        if self.delta < self.dt * (1.0 - 1e-12) {
            return Err(SimError::config(format!(
                "delta {} is smaller than dt {}",
                self.delta, self.dt
            )));
        }
        match whole_steps(self.delta, self.dt) {
            Some(n) if n >= 1 => {}
            _ => {
                return Err(SimError::config(format!(
                    "delta {} is not a whole multiple of dt {}",
                    self.delta, self.dt
                )))
            }
        }
        if self.n_modes == 0 {
            return Err(SimError::config("n_modes must be positive"));
        }
        if self.grid_size < 2 * self.n_modes + 1 {
            return Err(SimError::config(format!(
                "grid_size {} too small for {} modes",
                self.grid_size, self.n_modes
            )));
        }
        if self.mc_samples == 0 {
            return Err(SimError::config("mc_samples must be positive"));
        }
        if self.p_exponents.iter().any(|p| !(*p >= 2.0 && p.is_finite())) {
            return Err(SimError::config("error exponents must be finite and >= 2"));
        }
        Ok(())
    }

    /// Additional checks that depend on the coefficients: an explicit
    /// non-linear fast drift needs `dt ≤ ε/10`.
    pub fn validate_for(&self, coeffs: &SystemCoefficients) -> Result<()> {
        self.validate()?;
        if !self.uses_exact_fast(coeffs) && self.dt > self.epsilon / 10.0 * (1.0 + 1e-12) {
            return Err(SimError::config(format!(
                "explicit fast stepping needs dt <= epsilon/10 ({} > {})",
                self.dt,
                self.epsilon / 10.0
            )));
        }
        Ok(())
    }

    /// Warning text when `dt·N²` exceeds the explicit-advection guideline
    /// `0.5/π²`.
    pub fn cfl_warning(&self, coeffs: &SystemCoefficients) -> Option<String> {
        let cfl = self.dt * (self.n_modes * self.n_modes) as f64;
        let limit = 0.5 / (std::f64::consts::PI * std::f64::consts::PI);
        (coeffs.advection && cfl > limit).then(|| {
            format!("dt * N^2 = {cfl:.3e} exceeds the explicit-advection guideline {limit:.3e}; watch for blow-up")
        })
    }

    pub fn uses_exact_fast(&self, coeffs: &SystemCoefficients) -> bool {
        self.exact_fast && matches!(coeffs.f2, FastDrift::Linear { .. })
    }

    pub fn steps(&self) -> usize {
        if self.horizon == 0.0 {
            0
        } else {
            whole_steps(self.horizon, self.dt).expect("validated horizon")
        }
    }

    pub fn delta_steps(&self) -> usize {
        whole_steps(self.delta, self.dt).expect("validated delta").max(1)
    }

    pub fn basis(&self) -> Result<BasisSpec> {
        crate::spectral::build_basis(self.n_modes, self.grid_size)
    }
}

/// Slow and fast state at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlowFastState {
    pub x: SpectralField,
    pub y: SpectralField,
    pub t: f64,
}

/// Mode coefficients at every step `0, dt, …, steps·dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    dt: f64,
    n_modes: usize,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn new(dt: f64, initial: &SpectralField) -> Self {
        Trajectory {
            dt,
            n_modes: initial.len(),
            data: initial.coeffs().to_vec(),
        }
    }

    pub fn with_capacity(dt: f64, initial: &SpectralField, steps: usize) -> Self {
        let mut data = Vec::with_capacity((steps + 1) * initial.len());
        data.extend_from_slice(initial.coeffs());
        Trajectory {
            dt,
            n_modes: initial.len(),
            data,
        }
    }

    pub fn push(&mut self, state: &SpectralField) {
        assert_eq!(state.len(), self.n_modes);
        self.data.extend_from_slice(state.coeffs());
    }

    /// Number of stored states (`steps + 1`).
    pub fn len(&self) -> usize {
        self.data.len() / self.n_modes
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_modes..(i + 1) * self.n_modes]
    }

    pub fn field(&self, i: usize) -> SpectralField {
        SpectralField::new(self.state(i).to_vec())
    }

    pub fn last(&self) -> SpectralField {
        self.field(self.len() - 1)
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_modes)
    }

    /// `t,c1,…,cN` per stored step, or `t,u(ξ_1),…` on the basis grid when a
    /// basis is given. Every `stride`-th step is written, plus the last one.
    pub fn write_csv<W: Write>(&self, mut w: W, basis: Option<&BasisSpec>, stride: usize) -> io::Result<()> {
        let stride = stride.max(1);
        write!(w, "t")?;
        match basis {
            Some(b) => {
                for xi in b.grid() {
                    write!(w, ",u({xi:.6})")?;
                }
            }
            None => {
                for k in 1..=self.n_modes {
                    write!(w, ",c{k}")?;
                }
            }
        }
        writeln!(w)?;
        let n = self.len();
        for i in (0..n).filter(|i| i % stride == 0 || *i == n - 1) {
            write!(w, "{:.10e}", self.time(i))?;
            let values = match basis {
                Some(b) => b.to_physical(&self.field(i)),
                None => self.state(i).to_vec(),
            };
            for v in values {
                write!(w, ",{v:.12e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// `(1 - e^{-a})/a`, continuous at 0.
fn phi1(a: f64) -> f64 {
    if a.abs() < 1e-12 {
        1.0 - 0.5 * a
    } else {
        -(-a).exp_m1() / a
    }
}

/// Precomputed per-mode factors for advancing the slow component by `dt`.
pub struct SlowStepper<'a> {
    basis: &'a BasisSpec,
    coeffs: &'a SystemCoefficients,
    noise: &'a NoiseModel,
    dt: f64,
    decay: Vec<f64>,
    gauss_scale: Vec<f64>,
}

impl<'a> SlowStepper<'a> {
    pub fn new(basis: &'a BasisSpec, coeffs: &'a SystemCoefficients, noise: &'a NoiseModel, dt: f64) -> Self {
        assert_eq!(noise.n_modes(), basis.n_modes(), "noise/basis mode count mismatch");
        SlowStepper {
            basis,
            coeffs,
            noise,
            dt,
            decay: basis.semigroup_factors(dt, 1.0),
            gauss_scale: noise.q_coeffs.iter().map(|a| (a * dt).sqrt()).collect(),
        }
    }

    /// One step with the forcing value `drift` (either `f₁(X, Y)` or `f̄₁(X)`).
    pub fn advance(&self, x: &SpectralField, drift: &SpectralField, noise: StepNoise<'_>) -> SpectralField {
        let mut next = x.clone();
        next.add_scaled(self.dt, drift);
        if self.coeffs.advection {
            next.add_scaled(self.dt, &self.basis.burgers_nonlinearity(x));
        }
        if !noise.gaussian.is_empty() {
            for ((c, s), g) in next.coeffs_mut().iter_mut().zip(&self.gauss_scale).zip(noise.gaussian) {
                *c += s * g;
            }
        }
        if let Some(h1) = &self.coeffs.h1 {
            let jumps =
                compensated_jump_contribution(x, h1, noise.marks, &self.noise.marks, self.noise.levy_rate, self.dt);
            next.add_scaled(1.0, &jumps);
        }
        for (c, d) in next.coeffs_mut().iter_mut().zip(&self.decay) {
            *c *= d;
        }
        next
    }
}

enum FastScheme {
    /// `Y_k ← d_k Y_k + g_k forcing_k(x) + s_k ξ_k + d_k J_k`
    ExactOu {
        decay: Vec<f64>,
        forcing_gain: Vec<f64>,
        noise_sd: Vec<f64>,
    },
    /// `Y ← e^{-(dt/ε) c λ_k} [Y + (dt/ε) f₂ + s_k ξ_k + J]`
    ExpEuler {
        decay: Vec<f64>,
        drift_scale: f64,
        noise_sd: Vec<f64>,
    },
}

/// Precomputed factors for advancing the fast component by `dt` at scale `ε`.
/// The frozen equation is the case `ε = 1` with `x` held fixed.
pub struct FastStepper<'a> {
    coeffs: &'a SystemCoefficients,
    noise: &'a NoiseModel,
    dt: f64,
    jump_rate: f64,
    scheme: FastScheme,
}

impl<'a> FastStepper<'a> {
    pub fn new(
        basis: &'a BasisSpec,
        coeffs: &'a SystemCoefficients,
        noise: &'a NoiseModel,
        dt: f64,
        epsilon: f64,
        exact: bool,
    ) -> Self {
        assert_eq!(noise.n_modes(), basis.n_modes(), "noise/basis mode count mismatch");
        let ratio = dt / epsilon;
        let c = coeffs.fast_diffusion;
        let scheme = match (&coeffs.f2, exact) {
            (FastDrift::Linear { damping, .. }, true) => {
                let mut decay = Vec::with_capacity(basis.n_modes());
                let mut forcing_gain = Vec::with_capacity(basis.n_modes());
                let mut noise_sd = Vec::with_capacity(basis.n_modes());
                for (l, a) in basis.eigenvalues().iter().zip(&noise.q_coeffs) {
                    let rate = (c * l + damping) * ratio;
                    decay.push((-rate).exp());
                    forcing_gain.push(ratio * phi1(rate));
                    noise_sd.push((a * ratio * phi1(2.0 * rate)).sqrt());
                }
                FastScheme::ExactOu {
                    decay,
                    forcing_gain,
                    noise_sd,
                }
            }
            _ => FastScheme::ExpEuler {
                decay: basis.semigroup_factors(ratio, c),
                drift_scale: ratio,
                noise_sd: noise.q_coeffs.iter().map(|a| (a * ratio).sqrt()).collect(),
            },
        };
        FastStepper {
            coeffs,
            noise,
            dt,
            jump_rate: noise.levy_rate / epsilon,
            scheme,
        }
    }

    fn jumps(&self, x: &SpectralField, y: &SpectralField, marks: &[f64]) -> Option<SpectralField> {
        let h2 = self.coeffs.h2.as_ref()?;
        let mut out = SpectralField::zeros(y.len());
        for &z in marks {
            out.add_scaled(1.0, &h2.eval(x, y, z));
        }
        if self.jump_rate > 0.0 {
            let comp = mark_expectation_of(&self.noise.marks, h2.is_mark_linear(), y.len(), |z| h2.eval(x, y, z));
            out.add_scaled(-self.jump_rate * self.dt, &comp);
        }
        Some(out)
    }

    pub fn advance(&self, x: &SpectralField, y: &SpectralField, noise: StepNoise<'_>) -> SpectralField {
        let jumps = self.jumps(x, y, noise.marks);
        match &self.scheme {
            FastScheme::ExactOu {
                decay,
                forcing_gain,
                noise_sd,
            } => {
                let mut next = y.clone();
                if let Some(j) = &jumps {
                    next.add_scaled(1.0, j);
                }
                for (c, d) in next.coeffs_mut().iter_mut().zip(decay) {
                    *c *= d;
                }
                if let FastDrift::Linear { forcing: Some(g), .. } = &self.coeffs.f2 {
                    let gx = g(x);
                    for ((c, k), v) in next.coeffs_mut().iter_mut().zip(forcing_gain).zip(gx.coeffs()) {
                        *c += k * v;
                    }
                }
                if !noise.gaussian.is_empty() {
                    for ((c, s), g) in next.coeffs_mut().iter_mut().zip(noise_sd).zip(noise.gaussian) {
                        *c += s * g;
                    }
                }
                next
            }
            FastScheme::ExpEuler {
                decay,
                drift_scale,
                noise_sd,
            } => {
                let mut next = y.clone();
                next.add_scaled(*drift_scale, &self.coeffs.f2.eval(x, y));
                if !noise.gaussian.is_empty() {
                    for ((c, s), g) in next.coeffs_mut().iter_mut().zip(noise_sd).zip(noise.gaussian) {
                        *c += s * g;
                    }
                }
                if let Some(j) = &jumps {
                    next.add_scaled(1.0, j);
                }
                for (c, d) in next.coeffs_mut().iter_mut().zip(decay) {
                    *c *= d;
                }
                next
            }
        }
    }
}

/// Draws for one step of the coupled system.
#[derive(Clone, Copy, Debug)]
pub struct StepDraws<'a> {
    pub slow: StepNoise<'a>,
    pub fast: StepNoise<'a>,
}

fn blow_up(t: f64) -> SimError {
    SimError::BlowUp {
        time: t,
        seed: None,
        path: None,
    }
}

/// Advance the coupled system by one step of `cfg.dt`.
pub fn step_slow_fast(
    state: &SlowFastState,
    coeffs: &SystemCoefficients,
    noise: &SystemNoise,
    cfg: &SimulationConfig,
    basis: &BasisSpec,
    draws: StepDraws<'_>,
) -> Result<SlowFastState> {
    let slow = SlowStepper::new(basis, coeffs, &noise.slow, cfg.dt);
    let fast = FastStepper::new(
        basis,
        coeffs,
        &noise.fast,
        cfg.dt,
        cfg.epsilon,
        cfg.uses_exact_fast(coeffs),
    );
    let drift = coeffs.f1_value(&state.x, &state.y);
    let x = slow.advance(&state.x, &drift, draws.slow);
    let y = fast.advance(&state.x, &state.y, draws.fast);
    let t = state.t + cfg.dt;
    if !(x.is_finite() && y.is_finite()) {
        return Err(blow_up(t));
    }
    Ok(SlowFastState { x, y, t })
}

/// Output of a slow-fast run.
#[derive(Clone, Debug)]
pub struct SlowFastRun {
    pub x: Trajectory,
    /// Fast trajectory, when requested.
    pub y: Option<Trajectory>,
    pub y_final: SpectralField,
    /// Realization of `(W^{Q₁}, N₁)`, for replay into the averaged equation.
    pub slow_noise: NoisePath,
    /// Realization of `(W^{Q₂}, N₂)`, for the auxiliary process.
    pub fast_noise: NoisePath,
}

/// Which optional outputs a run keeps.
#[derive(Clone, Copy, Debug, Default)]
pub struct RecordOptions {
    pub fast_trajectory: bool,
}

/// Identifies the random streams of one Monte Carlo path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PathSeed {
    pub master: u64,
    pub path: u64,
}

/// Draw the slow and fast noise realizations a run of `cfg` consumes.
pub fn sample_run_noise(noise: &SystemNoise, cfg: &SimulationConfig, seed: PathSeed) -> (NoisePath, NoisePath) {
    let steps = cfg.steps();
    let slow = NoisePath::sample(
        &noise.slow,
        steps,
        cfg.dt,
        noise.slow.levy_rate,
        &mut path_stream(seed.master, seed.path, Channel::SlowGaussian),
        &mut path_stream(seed.master, seed.path, Channel::SlowJumps),
    )
    .with_origin(seed.master, seed.path);
    let fast = NoisePath::sample(
        &noise.fast,
        steps,
        cfg.dt,
        noise.fast.levy_rate / cfg.epsilon,
        &mut path_stream(seed.master, seed.path, Channel::FastGaussian),
        &mut path_stream(seed.master, seed.path, Channel::FastJumps),
    )
    .with_origin(seed.master, seed.path);
    (slow, fast)
}

/// Simulate the coupled system from `(x0, y0)` over `[0, T]`.
///
/// The noise is drawn up front from the path's streams and returned, so the
/// averaged equation can be replayed on the same realization.
#[allow(clippy::too_many_arguments)]
pub fn simulate_slow_fast(
    x0: &SpectralField,
    y0: &SpectralField,
    coeffs: &SystemCoefficients,
    noise: &SystemNoise,
    cfg: &SimulationConfig,
    basis: &BasisSpec,
    seed: PathSeed,
    record: RecordOptions,
) -> Result<SlowFastRun> {
    let (slow_noise, fast_noise) = sample_run_noise(noise, cfg, seed);
    simulate_slow_fast_replay(x0, y0, coeffs, noise, cfg, basis, slow_noise, fast_noise, record)
        .map_err(|e| e.with_origin(seed.master, seed.path))
}

/// Simulate the coupled system on given noise realizations.
#[allow(clippy::too_many_arguments)]
pub fn simulate_slow_fast_replay(
    x0: &SpectralField,
    y0: &SpectralField,
    coeffs: &SystemCoefficients,
    noise: &SystemNoise,
    cfg: &SimulationConfig,
    basis: &BasisSpec,
    slow_noise: NoisePath,
    fast_noise: NoisePath,
    record: RecordOptions,
) -> Result<SlowFastRun> {
    cfg.validate_for(coeffs)?;
    let steps = cfg.steps();
    let n = basis.n_modes();
    if x0.len() != n || y0.len() != n {
        return Err(SimError::config("initial data do not match the basis"));
    }
    if !(x0.is_finite() && y0.is_finite()) {
        return Err(SimError::config("initial data must be finite"));
    }
    slow_noise.check_shape(n, steps)?;
    fast_noise.check_shape(n, steps)?;
    let slow = SlowStepper::new(basis, coeffs, &noise.slow, cfg.dt);
    let fast = FastStepper::new(
        basis,
        coeffs,
        &noise.fast,
        cfg.dt,
        cfg.epsilon,
        cfg.uses_exact_fast(coeffs),
    );
    let mut xt = Trajectory::with_capacity(cfg.dt, x0, steps);
    let mut yt = record
        .fast_trajectory
        .then(|| Trajectory::with_capacity(cfg.dt, y0, steps));
    let mut x = x0.clone();
    let mut y = y0.clone();
    for i in 0..steps {
        let drift = coeffs.f1_value(&x, &y);
        let x_next = slow.advance(&x, &drift, slow_noise.step(i));
        let y_next = fast.advance(&x, &y, fast_noise.step(i));
        if !(x_next.is_finite() && y_next.is_finite()) {
            return Err(blow_up((i + 1) as f64 * cfg.dt));
        }
        x = x_next;
        y = y_next;
        xt.push(&x);
        if let Some(t) = yt.as_mut() {
            t.push(&y);
        }
    }
    Ok(SlowFastRun {
        x: xt,
        y: yt,
        y_final: y,
        slow_noise,
        fast_noise,
    })
}

/// Simulate the averaged equation with drift `fbar`, driven by a recorded
/// slow noise realization.
pub fn simulate_averaged(
    x0: &SpectralField,
    fbar: &dyn Fn(&SpectralField) -> SpectralField,
    coeffs: &SystemCoefficients,
    slow_noise_model: &NoiseModel,
    cfg: &SimulationConfig,
    basis: &BasisSpec,
    replay: &NoisePath,
) -> Result<Trajectory> {
    cfg.validate()?;
    let steps = cfg.steps();
    replay.check_shape(basis.n_modes(), steps)?;
    if x0.len() != basis.n_modes() {
        return Err(SimError::config("initial data do not match the basis"));
    }
    let slow = SlowStepper::new(basis, coeffs, slow_noise_model, cfg.dt);
    let mut traj = Trajectory::with_capacity(cfg.dt, x0, steps);
    let mut x = x0.clone();
    for i in 0..steps {
        let drift = fbar(&x);
        x = slow.advance(&x, &drift, replay.step(i));
        if !x.is_finite() {
            return Err(blow_up((i + 1) as f64 * cfg.dt));
        }
        traj.push(&x);
    }
    Ok(traj)
}

/// Draw one step of noise on the fly (used where nothing needs replaying).
pub(crate) fn draw_step<R: Rng>(
    model: &NoiseModel,
    jump_rate: f64,
    dt: f64,
    rng: &mut R,
    gauss: &mut Vec<f64>,
    marks: &mut Vec<f64>,
) {
    gauss.clear();
    marks.clear();
    if model.has_gaussian() {
        gauss.extend((0..model.n_modes()).map(|_| -> f64 { StandardNormal.sample(rng) }));
    }
    let mean = jump_rate * dt;
    if mean > 0.0 {
        let count: f64 = rand_distr::Poisson::new(mean).expect("valid Poisson mean").sample(rng);
        for _ in 0..count as u64 {
            marks.push(model.marks.sample(rng));
        }
    }
}

/// Simulate the frozen fast equation (unit time scale, `x` fixed).
#[allow(clippy::too_many_arguments)]
pub fn simulate_frozen<R: Rng>(
    x_frozen: &SpectralField,
    y0: &SpectralField,
    coeffs: &SystemCoefficients,
    fast_noise_model: &NoiseModel,
    horizon: f64,
    dt: f64,
    exact: bool,
    basis: &BasisSpec,
    rng: &mut R,
) -> Result<Trajectory> {
    let steps = frozen_steps(horizon, dt)?;
    let stepper = FastStepper::new(basis, coeffs, fast_noise_model, dt, 1.0, exact);
    let mut traj = Trajectory::with_capacity(dt, y0, steps);
    let mut y = y0.clone();
    let (mut gauss, mut marks) = (Vec::new(), Vec::new());
    for i in 0..steps {
        draw_step(
            fast_noise_model,
            fast_noise_model.levy_rate,
            dt,
            rng,
            &mut gauss,
            &mut marks,
        );
        y = stepper.advance(
            x_frozen,
            &y,
            StepNoise {
                gaussian: &gauss,
                marks: &marks,
            },
        );
        if !y.is_finite() {
            return Err(blow_up((i + 1) as f64 * dt));
        }
        traj.push(&y);
    }
    Ok(traj)
}

pub(crate) fn frozen_steps(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && horizon >= 0.0) {
        return Err(SimError::config("frozen run needs dt > 0 and horizon >= 0"));
    }
    whole_steps(horizon, dt).ok_or_else(|| SimError::config("horizon is not a whole number of steps"))
}

/// Khasminskii auxiliary process.
///
/// On each block `[kδ, (k+1)δ)` the fast equation is restarted from
/// `Y_{kδ}` and integrated with the slow input frozen at `X_{kδ}`, driven by
/// the same fast noise as `Y`. The stored value at a breakpoint is the left
/// limit, so the final entry is the end of the last block.
pub fn simulate_auxiliary(
    slow: &Trajectory,
    fast: &Trajectory,
    coeffs: &SystemCoefficients,
    fast_noise_model: &NoiseModel,
    cfg: &SimulationConfig,
    basis: &BasisSpec,
    fast_noise: &NoisePath,
) -> Result<Trajectory> {
    cfg.validate_for(coeffs)?;
    let steps = cfg.steps();
    if slow.len() != steps + 1 || fast.len() != steps + 1 {
        return Err(SimError::config("trajectories do not match the configured step grid"));
    }
    if (slow.dt() - cfg.dt).abs() > 1e-15 || (fast.dt() - cfg.dt).abs() > 1e-15 {
        return Err(SimError::config("trajectory step differs from the configured dt"));
    }
    if steps > 0 && whole_steps(cfg.horizon, cfg.delta).is_none() {
        return Err(SimError::config(format!(
            "delta {} does not divide the horizon {}",
            cfg.delta, cfg.horizon
        )));
    }
    fast_noise.check_shape(basis.n_modes(), steps)?;
    let block = cfg.delta_steps();
    let stepper = FastStepper::new(
        basis,
        coeffs,
        fast_noise_model,
        cfg.dt,
        cfg.epsilon,
        cfg.uses_exact_fast(coeffs),
    );
    let mut traj = Trajectory::with_capacity(cfg.dt, &fast.field(0), steps);
    let mut y_hat = fast.field(0);
    let mut x_frozen = slow.field(0);
    for i in 0..steps {
        if i % block == 0 {
            y_hat = fast.field(i);
            x_frozen = slow.field(i);
        }
        y_hat = stepper.advance(&x_frozen, &y_hat, fast_noise.step(i));
        if !y_hat.is_finite() {
            return Err(blow_up((i + 1) as f64 * cfg.dt));
        }
        traj.push(&y_hat);
    }
    Ok(traj)
}
