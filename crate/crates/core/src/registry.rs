//! Built-in example systems.

use std::sync::Arc;

use crate::error::{Result, SimError};
use crate::integrators::{FastDrift, FieldFn, LipschitzConstants, SystemCoefficients, SystemNoise};
use crate::noise::{JumpCoefficient, MarkLaw, NoiseModel};
use crate::spectral::SpectralField;

/// Stochastic Burgers equation forced by `-(u + v)`, additive noise and
/// multiplicative jumps `u·z`; `v` is a fast Ornstein–Uhlenbeck process.
pub const BURGERS_OU_LEVY: &str = "burgers_ou_levy";
/// As [`BURGERS_OU_LEVY`], with the fast drift `-v + κu` so the fast process
/// feels the slow one.
pub const BURGERS_OU_LEVY_COUPLED: &str = "burgers_ou_levy_coupled";
/// Stochastic heat equation with an inert fast variable.
pub const HEAT: &str = "heat";

pub const EXAMPLES: [&str; 3] = [BURGERS_OU_LEVY, BURGERS_OU_LEVY_COUPLED, HEAT];

/// Coupling strength of [`BURGERS_OU_LEVY_COUPLED`].
pub const COUPLING: f64 = 1.0;

/// A fully specified system with its default initial data and horizon.
#[derive(Clone)]
pub struct ExampleSystem {
    pub name: &'static str,
    pub coeffs: SystemCoefficients,
    pub noise: SystemNoise,
    pub x0: SpectralField,
    pub y0: SpectralField,
    pub horizon: f64,
}

fn burgers_noise(n_modes: usize) -> SystemNoise {
    SystemNoise {
        slow: NoiseModel::power_law(n_modes, 1.0, 2.0, 1.0, MarkLaw::default()).with_regularity(2.0, 3.0),
        fast: NoiseModel::power_law(n_modes, 1.0, 2.0, 0.0, MarkLaw::default()).with_regularity(2.0, 3.0),
    }
}

fn burgers_coeffs(fast_forcing: Option<f64>) -> SystemCoefficients {
    let kappa = fast_forcing.unwrap_or(0.0);
    SystemCoefficients {
        advection: true,
        f1: Some(Arc::new(|u: &SpectralField, v: &SpectralField| -(u + v))),
        f2: FastDrift::Linear {
            damping: 1.0,
            forcing: fast_forcing.map(|k| Arc::new(move |u: &SpectralField| u.scaled(k)) as FieldFn),
        },
        h1: Some(JumpCoefficient::multiplicative()),
        h2: None,
        lipschitz: LipschitzConstants {
            f1: 1.0,
            f2: 1.0f64.max(kappa.abs()),
            h1: 1.0,
            h2: 0.0,
        },
        fast_diffusion: 0.0,
        analytic_fbar: Some(Arc::new(move |u: &SpectralField| u.scaled(-(1.0 + kappa)))),
    }
}

/// Look up an example by name at the given truncation.
pub fn example(name: &str, n_modes: usize) -> Result<ExampleSystem> {
    if n_modes == 0 {
        return Err(SimError::Config("n_modes must be positive".into()));
    }
    match name {
        BURGERS_OU_LEVY => Ok(ExampleSystem {
            name: BURGERS_OU_LEVY,
            coeffs: burgers_coeffs(None),
            noise: burgers_noise(n_modes),
            x0: SpectralField::constant(n_modes, 2.0),
            y0: SpectralField::constant(n_modes, 1.0),
            horizon: 1.0,
        }),
        BURGERS_OU_LEVY_COUPLED => Ok(ExampleSystem {
            name: BURGERS_OU_LEVY_COUPLED,
            coeffs: burgers_coeffs(Some(COUPLING)),
            noise: burgers_noise(n_modes),
            x0: SpectralField::constant(n_modes, 2.0),
            y0: SpectralField::constant(n_modes, 1.0),
            horizon: 1.0,
        }),
        HEAT => Ok(ExampleSystem {
            name: HEAT,
            coeffs: SystemCoefficients::heat(),
            noise: SystemNoise {
                slow: NoiseModel::power_law(n_modes, 1.0, 2.0, 0.0, MarkLaw::default()).with_regularity(2.0, 3.0),
                fast: NoiseModel::silent(n_modes),
            },
            x0: SpectralField::mode(n_modes, 1, 1.0),
            y0: SpectralField::zeros(n_modes),
            horizon: 1.0,
        }),
        other => Err(SimError::UnknownExample(other.to_string())),
    }
}
