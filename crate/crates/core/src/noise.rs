//! Q-Wiener and compensated small-jump Lévy noise.
//!
//! The Gaussian part is the Karhunen–Loève sum `W^Q = Σ √α_k β^k e_k`; an
//! increment over `dt` has independent coefficients `√(α_k dt) ξ_k`. Jumps are
//! a finite-activity compound Poisson process with marks in `(-1, 1)`.
//!
//! Every draw a run consumes is materialized into a [`NoisePath`] before
//! stepping, so the averaged equation can be driven by the very same
//! realization as the slow-fast system.

use std::io::{self, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::spectral::SpectralField;

/// Jump-mark distribution. Support is restricted to `|z| < 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarkLaw {
    /// Uniform on `(low, high)`.
    Uniform { low: f64, high: f64 },
    /// `±magnitude` with equal probability.
    Symmetric { magnitude: f64 },
}

impl Default for MarkLaw {
    fn default() -> Self {
        MarkLaw::Uniform { low: -1.0, high: 1.0 }
    }
}

// 8-point Gauss–Legendre nodes/weights on [-1, 1].
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

impl MarkLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MarkLaw::Uniform { low, high } => {
                if !(low < high) || low < -1.0 || high > 1.0 {
                    return Err(SimError::config(format!(
                        "uniform mark law needs -1 <= low < high <= 1, got ({low}, {high})"
                    )));
                }
            }
            MarkLaw::Symmetric { magnitude } => {
                if !(0.0..1.0).contains(&magnitude) {
                    return Err(SimError::config(format!(
                        "symmetric mark magnitude must lie in [0, 1), got {magnitude}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            MarkLaw::Uniform { low, high } => loop {
                let z = low + (high - low) * rng.random::<f64>();
                if z.abs() < 1.0 && z > low {
                    break z;
                }
            },
            MarkLaw::Symmetric { magnitude } => {
                if rng.random::<bool>() {
                    magnitude
                } else {
                    -magnitude
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            MarkLaw::Uniform { low, high } => 0.5 * (low + high),
            MarkLaw::Symmetric { .. } => 0.0,
        }
    }

    /// Nodes and probability weights integrating polynomials in `z` of degree
    /// up to 15 exactly against the mark law.
    pub fn quadrature(&self) -> Vec<(f64, f64)> {
        match *self {
            MarkLaw::Uniform { low, high } => {
                let mid = 0.5 * (low + high);
                let half = 0.5 * (high - low);
                GL_NODES
                    .iter()
                    .zip(GL_WEIGHTS)
                    .map(|(x, w)| (mid + half * x, 0.5 * w))
                    .collect()
            }
            MarkLaw::Symmetric { magnitude } => vec![(-magnitude, 0.5), (magnitude, 0.5)],
        }
    }

    /// `E|z|^γ`.
    pub fn abs_moment(&self, gamma: f64) -> f64 {
        match *self {
            MarkLaw::Uniform { low, high } => {
                // ∫ |z|^γ dz / (high - low), split at zero
                let prim = |z: f64| z.signum() * z.abs().powf(gamma + 1.0) / (gamma + 1.0);
                (prim(high) - prim(low)) / (high - low)
            }
            MarkLaw::Symmetric { magnitude } => magnitude.powf(gamma),
        }
    }
}

/// Declared constants `(β, ρ)` for the noise-regularity condition
/// `Σ α_k^ρ / λ_k^β < ∞` with `β(ρ - 2)/ρ < 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRegularity {
    pub beta: f64,
    pub rho: f64,
}

/// Q-Wiener covariance weights and Lévy jump specification for one component.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    /// `α_k ≥ 0`, k = 1..N.
    pub q_coeffs: Vec<f64>,
    /// Jump rate `λ_lev` (jumps per unit time).
    pub levy_rate: f64,
    pub marks: MarkLaw,
    pub regularity: Option<NoiseRegularity>,
}

impl NoiseModel {
    /// `α_k = amplitude · k^{-decay}`.
    pub fn power_law(n_modes: usize, amplitude: f64, decay: f64, levy_rate: f64, marks: MarkLaw) -> Self {
        let q_coeffs = (1..=n_modes).map(|k| amplitude * (k as f64).powf(-decay)).collect();
        NoiseModel {
            q_coeffs,
            levy_rate,
            marks,
            regularity: None,
        }
    }

    /// No Gaussian forcing and no jumps.
    pub fn silent(n_modes: usize) -> Self {
        NoiseModel {
            q_coeffs: vec![0.0; n_modes],
            levy_rate: 0.0,
            marks: MarkLaw::default(),
            regularity: None,
        }
    }

    pub fn with_regularity(mut self, beta: f64, rho: f64) -> Self {
        self.regularity = Some(NoiseRegularity { beta, rho });
        self
    }

    pub fn n_modes(&self) -> usize {
        self.q_coeffs.len()
    }

    pub fn trace(&self) -> f64 {
        self.q_coeffs.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.q_coeffs.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(SimError::config("Q coefficients must be finite and non-negative"));
        }
        if !(self.levy_rate.is_finite() && self.levy_rate >= 0.0) {
            return Err(SimError::config("Lévy rate must be finite and non-negative"));
        }
        self.marks.validate()
    }

    pub fn has_gaussian(&self) -> bool {
        self.q_coeffs.iter().any(|a| *a > 0.0)
    }
}

/// One Q-Wiener increment over `dt`: coefficient `k` is `√(α_k dt) ξ_k`.
pub fn sample_qwiener_increment<R: Rng + ?Sized>(model: &NoiseModel, dt: f64, rng: &mut R) -> SpectralField {
    assert!(dt > 0.0, "dt must be positive");
    let coeffs = model
        .q_coeffs
        .iter()
        .map(|a| {
            let xi: f64 = StandardNormal.sample(rng);
            (a * dt).sqrt() * xi
        })
        .collect();
    SpectralField::new(coeffs)
}

/// Marks of the jumps falling in one step of length `dt`; the count is
/// `Poisson(levy_rate · dt)`.
pub fn sample_jump_events<R: Rng + ?Sized>(model: &NoiseModel, dt: f64, rng: &mut R) -> Vec<f64> {
    assert!(dt > 0.0, "dt must be positive");
    let mut marks = Vec::new();
    push_jump_marks(model.levy_rate * dt, &model.marks, rng, &mut marks);
    marks
}

fn push_jump_marks<R: Rng + ?Sized>(mean_count: f64, law: &MarkLaw, rng: &mut R, out: &mut Vec<f64>) {
    if mean_count <= 0.0 {
        return;
    }
    let count: f64 = Poisson::new(mean_count)
        .expect("positive finite Poisson mean")
        .sample(rng);
    for _ in 0..count as u64 {
        out.push(law.sample(rng));
    }
}

type JumpFn = std::sync::Arc<dyn Fn(&SpectralField, f64) -> SpectralField + Send + Sync>;

/// A jump coefficient `h(state, z)`.
///
/// `mark_linear` declares `h(u, z) = z · h(u, 1)`, which lets the compensator
/// be evaluated from the mark mean alone.
#[derive(Clone)]
pub struct JumpCoefficient {
    eval: JumpFn,
    mark_linear: bool,
}

impl std::fmt::Debug for JumpCoefficient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JumpCoefficient")
            .field("mark_linear", &self.mark_linear)
            .finish_non_exhaustive()
    }
}

impl JumpCoefficient {
    pub fn new(f: impl Fn(&SpectralField, f64) -> SpectralField + Send + Sync + 'static) -> Self {
        JumpCoefficient {
            eval: std::sync::Arc::new(f),
            mark_linear: false,
        }
    }

    /// `h(u, z) = z · g(u)`.
    pub fn mark_linear(g: impl Fn(&SpectralField) -> SpectralField + Send + Sync + 'static) -> Self {
        JumpCoefficient {
            eval: std::sync::Arc::new(move |u, z| g(u).scaled(z)),
            mark_linear: true,
        }
    }

    /// `h(u, z) = z · u`.
    pub fn multiplicative() -> Self {
        JumpCoefficient {
            eval: std::sync::Arc::new(|u: &SpectralField, z| u.scaled(z)),
            mark_linear: true,
        }
    }

    pub fn eval(&self, state: &SpectralField, z: f64) -> SpectralField {
        (self.eval)(state, z)
    }

    pub fn is_mark_linear(&self) -> bool {
        self.mark_linear
    }

    /// `E_z[h(state, z)]` under the mark law.
    pub fn mark_expectation(&self, state: &SpectralField, law: &MarkLaw) -> SpectralField {
        mark_expectation_of(law, self.mark_linear, state.len(), |z| self.eval(state, z))
    }
}

/// `E_z[f(z)]` for a field-valued function of the mark. When `mark_linear`
/// is set, `f` is only evaluated at the mark mean.
pub fn mark_expectation_of(
    law: &MarkLaw,
    mark_linear: bool,
    n_modes: usize,
    f: impl Fn(f64) -> SpectralField,
) -> SpectralField {
    if mark_linear {
        let m = law.mean();
        if m == 0.0 {
            return SpectralField::zeros(n_modes);
        }
        return f(m);
    }
    let mut acc = SpectralField::zeros(n_modes);
    for (z, w) in law.quadrature() {
        acc.add_scaled(w, &f(z));
    }
    acc
}

/// `Σ_marks h(state, z) − rate·dt·E_z[h(state, z)]`.
///
/// `rate` is the jump intensity actually used to draw `marks`; for the fast
/// component that is `levy_rate / ε`.
pub fn compensated_jump_contribution(
    state: &SpectralField,
    h: &JumpCoefficient,
    marks: &[f64],
    law: &MarkLaw,
    rate: f64,
    dt: f64,
) -> SpectralField {
    let mut out = SpectralField::zeros(state.len());
    for &z in marks {
        out.add_scaled(1.0, &h.eval(state, z));
    }
    if rate > 0.0 {
        out.add_scaled(-rate * dt, &h.mark_expectation(state, law));
    }
    out
}

/// Independent random stream for one Monte Carlo path and noise channel.
///
/// The master seed fixes the ChaCha key; the path index and channel select
/// one of its 2^64 streams, so streams never overlap and a path's draws do
/// not depend on how paths are scheduled across threads.
pub fn path_stream(master_seed: u64, path: u64, channel: Channel) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((path << 8) | channel as u64);
    rng
}

/// Noise channels of a path. Each gets its own stream so that, e.g., the
/// slow noise of path `i` is identical across different ε.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Channel {
    SlowGaussian = 0,
    SlowJumps = 1,
    FastGaussian = 2,
    FastJumps = 3,
    Frozen = 4,
    Validation = 5,
}

/// A recorded noise realization: standard normal draws per step and jump
/// marks per step.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePath {
    n_modes: usize,
    steps: usize,
    gaussian: Vec<f64>,
    jump_offsets: Vec<usize>,
    marks: Vec<f64>,
    /// `(master seed, path index)` this path was drawn from, if any.
    pub origin: Option<(u64, u64)>,
}

/// Draws of a single step.
#[derive(Clone, Copy, Debug)]
pub struct StepNoise<'a> {
    /// Standard normals, one per mode (empty when the model has no Gaussian part).
    pub gaussian: &'a [f64],
    pub marks: &'a [f64],
}

impl NoisePath {
    /// Draw `steps` steps of noise. Gaussian draws come from `gauss_rng`, jump
    /// counts and marks (at intensity `jump_rate`) from `jump_rng`.
    pub fn sample<R1: Rng, R2: Rng>(
        model: &NoiseModel,
        steps: usize,
        dt: f64,
        jump_rate: f64,
        gauss_rng: &mut R1,
        jump_rng: &mut R2,
    ) -> NoisePath {
        let n_modes = model.n_modes();
        let gaussian = if model.has_gaussian() {
            (0..steps * n_modes).map(|_| StandardNormal.sample(gauss_rng)).collect()
        } else {
            Vec::new()
        };
        let mut jump_offsets = Vec::with_capacity(steps + 1);
        let mut marks = Vec::new();
        jump_offsets.push(0);
        for _ in 0..steps {
            push_jump_marks(jump_rate * dt, &model.marks, jump_rng, &mut marks);
            jump_offsets.push(marks.len());
        }
        NoisePath {
            n_modes,
            steps,
            gaussian,
            jump_offsets,
            marks,
            origin: None,
        }
    }

    /// A path with no draws at all.
    pub fn silent(n_modes: usize, steps: usize) -> NoisePath {
        NoisePath {
            n_modes,
            steps,
            gaussian: Vec::new(),
            jump_offsets: vec![0; steps + 1],
            marks: Vec::new(),
            origin: None,
        }
    }

    /// Build a path from explicit per-step draws.
    pub fn from_parts(n_modes: usize, gaussian: Vec<Vec<f64>>, jumps: Vec<Vec<f64>>) -> Result<NoisePath> {
        let steps = jumps.len();
        if !gaussian.is_empty() && gaussian.len() != steps {
            return Err(SimError::ReplayMismatch("gaussian and jump step counts differ".into()));
        }
        if gaussian.iter().any(|g| g.len() != n_modes) {
            return Err(SimError::ReplayMismatch(
                "gaussian draw count differs from mode count".into(),
            ));
        }
        let mut jump_offsets = vec![0];
        let mut marks = Vec::new();
        for step in jumps {
            if step.iter().any(|z| !(z.abs() < 1.0)) {
                return Err(SimError::config("jump marks must satisfy |z| < 1"));
            }
            marks.extend(step);
            jump_offsets.push(marks.len());
        }
        Ok(NoisePath {
            n_modes,
            steps,
            gaussian: gaussian.into_iter().flatten().collect(),
            jump_offsets,
            marks,
            origin: None,
        })
    }

    pub fn with_origin(mut self, seed: u64, path: u64) -> Self {
        self.origin = Some((seed, path));
        self
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn jump_count(&self) -> usize {
        self.marks.len()
    }

    pub fn step(&self, n: usize) -> StepNoise<'_> {
        let gaussian = if self.gaussian.is_empty() {
            &[][..]
        } else {
            &self.gaussian[n * self.n_modes..(n + 1) * self.n_modes]
        };
        StepNoise {
            gaussian,
            marks: &self.marks[self.jump_offsets[n]..self.jump_offsets[n + 1]],
        }
    }

    /// `(step index, mark)` pairs.
    pub fn jump_events(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.steps).flat_map(move |n| self.step(n).marks.iter().map(move |&z| (n, z)))
    }

    pub fn check_shape(&self, n_modes: usize, steps: usize) -> Result<()> {
        if self.n_modes != n_modes || self.steps != steps {
            return Err(SimError::ReplayMismatch(format!(
                "recorded path has {} modes x {} steps, run needs {} x {}",
                self.n_modes, self.steps, n_modes, steps
            )));
        }
        Ok(())
    }

    /// Debug dump. One row per step:
    /// `step,g_1,…,g_N,jumps` where `jumps` is a `;`-separated mark list.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "step")?;
        for k in 1..=self.n_modes {
            write!(w, ",g{k}")?;
        }
        writeln!(w, ",jumps")?;
        for n in 0..self.steps {
            let s = self.step(n);
            write!(w, "{n}")?;
            if s.gaussian.is_empty() {
                for _ in 0..self.n_modes {
                    write!(w, ",0")?;
                }
            } else {
                for g in s.gaussian {
                    write!(w, ",{g:e}")?;
                }
            }
            let marks: Vec<String> = s.marks.iter().map(|z| format!("{z:e}")).collect();
            writeln!(w, ",{}", marks.join(";"))?;
        }
        Ok(())
    }
}
