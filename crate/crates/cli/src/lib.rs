//! Command-line driver: configuration, dispatch and artifact output for the
//! `slowfast` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::run;
pub use config::{resolve, FileConfig, Overrides, ResolvedConfig};
pub use error::CliError;
pub use manifest::RunManifest;

/// Slow-fast stochastic Burgers systems: simulation, averaging error sweeps
/// and diagnostics.
#[derive(Debug, Parser)]
#[command(name = "slowfast", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one path of the slow-fast system and of the averaged equation
    /// on the same slow noise.
    Simulate {
        /// Write every k-th step.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Write values on the collocation grid instead of sine coefficients.
        #[arg(long)]
        physical: bool,
    },
    /// Monte Carlo estimate of E sup_t |X^eps - Xbar|^p over the epsilon list.
    Sweep,
    /// Ergodic estimate of the averaged drift at the initial slow state.
    Drift,
    /// Moment, time-increment and auxiliary-process diagnostics.
    Diagnose {
        #[arg(value_enum, default_value_t = DiagnosticKind::All)]
        kind: DiagnosticKind,
    },
    /// Quick deterministic checks against closed-form answers.
    Selfcheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Sweep => "sweep",
            Command::Drift => "drift",
            Command::Diagnose { .. } => "diagnose",
            Command::Selfcheck => "selfcheck",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DiagnosticKind {
    Moments,
    Increment,
    Auxiliary,
    All,
}

#[derive(Debug, Default, Args)]
pub struct CommonArgs {
    /// TOML config file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Built-in system: burgers_ou_levy, burgers_ou_levy_coupled or heat.
    #[arg(long, global = true, value_name = "NAME")]
    pub example: Option<String>,
    /// Comma-separated epsilon values. Single-run commands use the first.
    #[arg(long, global = true, value_name = "LIST", value_delimiter = ',')]
    pub epsilon: Option<Vec<f64>>,
    /// Comma-separated error exponents.
    #[arg(long, global = true, value_name = "LIST", value_delimiter = ',')]
    pub p: Option<Vec<f64>>,
    /// Monte Carlo paths per cell.
    #[arg(long, global = true, value_name = "M")]
    pub mc: Option<usize>,
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads (defaults to the available cores).
    #[arg(long, global = true, value_name = "K", env = "SLOWFAST_THREADS")]
    pub threads: Option<usize>,
    /// Output directory (default out/<command>).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Print the resolved config as TOML and exit.
    #[arg(long, global = true)]
    pub dump: bool,
    /// Continue when a structural assumption check fails.
    #[arg(long, global = true)]
    pub force: bool,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    /// Number of sine modes.
    #[arg(long, global = true)]
    pub modes: Option<usize>,
    /// Breakpoint spacing of the auxiliary process.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
}

impl CommonArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            example: self.example.clone(),
            epsilons: self.epsilon.clone(),
            p_exponents: self.p.clone(),
            mc_samples: self.mc,
            seed: self.seed,
            dt: self.dt,
            horizon: self.horizon,
            n_modes: self.modes,
            delta: self.delta,
        }
    }
}
