//! Spectral Galerkin simulation of slow-fast stochastic Burgers systems
//! driven by Q-Wiener noise and compensated Poisson jumps, together with the
//! averaged equation, ergodic estimation of the averaged drift and Monte Carlo
//! diagnostics of the averaging principle.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaging;
pub mod error;
pub mod experiments;
pub mod integrators;
pub mod noise;
pub mod registry;
pub mod selfcheck;
pub mod spectral;

pub use averaging::{
    analytic_averaged_drift, estimate_averaged_drift, validate_assumptions, Assumption, ErgodicEstimate,
    ErgodicOptions, ValidationReport,
};
pub use error::{Result, SimError};
pub use experiments::{
    run_auxiliary_gap, run_convergence_sweep, run_increment_diagnostic, run_moment_diagnostics, sup_error_path,
    ErrorReport, ExperimentSetup, MomentReport, SlopeReport,
};
pub use integrators::{
    simulate_auxiliary, simulate_averaged, simulate_frozen, simulate_slow_fast, step_slow_fast, FastDrift,
    LipschitzConstants, PathSeed, RecordOptions, SimulationConfig, SlowFastState, SystemCoefficients, SystemNoise,
    Trajectory, DEFAULT_SEED,
};
pub use noise::{MarkLaw, NoiseModel, NoisePath};
pub use registry::{example, ExampleSystem};
pub use spectral::{build_basis, BasisSpec, SpectralField};
