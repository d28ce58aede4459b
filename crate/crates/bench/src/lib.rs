//! Shared fixtures for the benchmarks.

use rand_distr::{Distribution, StandardNormal};
use slowfast_core::noise::{path_stream, Channel};
use slowfast_core::{build_basis, example, BasisSpec, ExampleSystem, SimulationConfig, SpectralField};

/// Worked example at `n` modes with a matching basis and config.
pub struct Fixture {
    pub basis: BasisSpec,
    pub system: ExampleSystem,
    pub config: SimulationConfig,
    /// One standard normal per mode, reused as the per-step draw.
    pub normals: Vec<f64>,
}

pub fn fixture(name: &str, n: usize) -> Fixture {
    let mut rng = path_stream(1, 0, Channel::Validation);
    Fixture {
        basis: build_basis(n, 2 * n + 1).expect("valid basis"),
        system: example(name, n).expect("built-in example"),
        config: SimulationConfig::new(0.01, 1e-4, 1.0, n),
        normals: (0..n).map(|_| StandardNormal.sample(&mut rng)).collect(),
    }
}

/// Field with coefficients `ξ_k / k`.
pub fn random_field(n: usize, seed: u64) -> SpectralField {
    let mut rng = path_stream(seed, 0, Channel::Validation);
    SpectralField::new(
        (1..=n)
            .map(|k| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g / k as f64
            })
            .collect(),
    )
}
