//! TOML run configuration: the on-disk format, command-line overrides and
//! resolution into a fully materialized [`ResolvedConfig`].

use std::path::Path;

use serde::{Deserialize, Serialize};
use slowfast_core::averaging::default_burn_in;
use slowfast_core::experiments::config_hash;
use slowfast_core::integrators::default_delta;
use slowfast_core::{example, ExperimentSetup, LipschitzConstants, SimulationConfig, SpectralField, DEFAULT_SEED};

use crate::error::CliError;

pub const DEFAULT_EXAMPLE: &str = slowfast_core::registry::BURGERS_OU_LEVY;
pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_EPSILONS: [f64; 3] = [1e-1, 1e-2, 1e-3];
pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_MODES: usize = 32;

/// Initial datum: a constant function (projected onto the modes) or explicit
/// sine coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialValue {
    Constant(f64),
    Coefficients(Vec<f64>),
}

impl InitialValue {
    fn field(&self, n_modes: usize, which: &str) -> Result<SpectralField, CliError> {
        match self {
            InitialValue::Constant(a) => Ok(SpectralField::constant(n_modes, *a)),
            InitialValue::Coefficients(c) if c.len() == n_modes => Ok(SpectralField::new(c.clone())),
            InitialValue::Coefficients(c) => Err(CliError::Validation(format!(
                "initial.{which} has {} coefficients but n_modes = {n_modes}",
                c.len()
            ))),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub n_modes: Option<usize>,
    pub grid_size: Option<usize>,
    pub mc_samples: Option<usize>,
    pub p_exponents: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub exact_fast: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub x0: Option<InitialValue>,
    pub y0: Option<InitialValue>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub epsilons: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AveragingSection {
    pub burn_in: Option<f64>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub batch_length: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub moment_orders: Option<Vec<f64>>,
    pub epsilons: Option<Vec<f64>>,
    pub increment_time: Option<f64>,
    pub increment_lags: Option<Vec<f64>>,
    pub increment_dt: Option<f64>,
    pub deltas: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzSection {
    pub f1: Option<f64>,
    pub f2: Option<f64>,
    pub h1: Option<f64>,
    pub h2: Option<f64>,
}

/// Contents of a config file. Every key is optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub example: Option<String>,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub averaging: AveragingSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub lipschitz: LipschitzSection,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config parse error: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// Values given on the command line; they take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub example: Option<String>,
    pub epsilons: Option<Vec<f64>>,
    pub p_exponents: Option<Vec<f64>>,
    pub mc_samples: Option<usize>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub n_modes: Option<usize>,
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InitialData {
    pub x0: InitialValue,
    pub y0: InitialValue,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSettings {
    pub epsilons: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AveragingSettings {
    pub burn_in: f64,
    pub horizon: f64,
    pub dt: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_length: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticSettings {
    pub moment_orders: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub increment_time: f64,
    pub increment_lags: Vec<f64>,
    pub increment_dt: f64,
    pub deltas: Vec<f64>,
}

/// Every setting of a run with defaults filled in. Serializes to a config
/// file that reproduces the run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub example: String,
    pub simulation: SimulationConfig,
    pub initial: InitialData,
    pub sweep: SweepSettings,
    pub averaging: AveragingSettings,
    pub diagnostics: DiagnosticSettings,
    pub lipschitz: LipschitzConstants,
}

impl ResolvedConfig {
    pub fn hash(&self) -> String {
        config_hash(self)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Validation(format!("cannot serialize config: {e}")))
    }

    /// The example with the configured initial data and Lipschitz constants.
    pub fn setup(&self) -> Result<ExperimentSetup, CliError> {
        let n = self.simulation.n_modes;
        let mut setup = ExperimentSetup::from_example(&self.example, n)?;
        setup.x0 = self.initial.x0.field(n, "x0")?;
        setup.y0 = self.initial.y0.field(n, "y0")?;
        setup.coeffs.lipschitz = self.lipschitz;
        Ok(setup)
    }
}

/// Fill in defaults: built-in values, then the example, then the file, then
/// the command line.
pub fn resolve(file: &FileConfig, o: &Overrides) -> Result<ResolvedConfig, CliError> {
    let s = &file.simulation;
    let name = o
        .example
        .clone()
        .or_else(|| file.example.clone())
        .unwrap_or_else(|| DEFAULT_EXAMPLE.into());
    let n_modes = o.n_modes.or(s.n_modes).unwrap_or(DEFAULT_MODES);
    let ex = example(&name, n_modes)?;

    let epsilon = o
        .epsilons
        .as_ref()
        .and_then(|e| e.first().copied())
        .or(s.epsilon)
        .unwrap_or(DEFAULT_EPSILON);
    let dt = o.dt.or(s.dt).unwrap_or(DEFAULT_DT);
    let horizon = o.horizon.or(s.horizon).unwrap_or(ex.horizon);
    let delta = o
        .delta
        .or(s.delta)
        .unwrap_or_else(|| default_delta(epsilon, dt, horizon));
    let simulation = SimulationConfig {
        epsilon,
        delta,
        dt,
        horizon,
        n_modes,
        grid_size: s.grid_size.unwrap_or(2 * n_modes + 1),
        mc_samples: o.mc_samples.or(s.mc_samples).unwrap_or(200),
        p_exponents: o
            .p_exponents
            .clone()
            .or_else(|| s.p_exponents.clone())
            .unwrap_or_else(|| vec![3.0, 4.0]),
        seed: o.seed.or(s.seed).unwrap_or(DEFAULT_SEED),
        exact_fast: s.exact_fast.unwrap_or(true),
    };

    let epsilons = o
        .epsilons
        .clone()
        .or_else(|| file.sweep.epsilons.clone())
        .unwrap_or_else(|| DEFAULT_EPSILONS.to_vec());
    let initial = InitialData {
        x0: file
            .initial
            .x0
            .clone()
            .unwrap_or_else(|| InitialValue::Coefficients(ex.x0.coeffs().to_vec())),
        y0: file
            .initial
            .y0
            .clone()
            .unwrap_or_else(|| InitialValue::Coefficients(ex.y0.coeffs().to_vec())),
    };
    let l = &file.lipschitz;
    let d = ex.coeffs.lipschitz;
    let lipschitz = LipschitzConstants {
        f1: l.f1.unwrap_or(d.f1),
        f2: l.f2.unwrap_or(d.f2),
        h1: l.h1.unwrap_or(d.h1),
        h2: l.h2.unwrap_or(d.h2),
    };

    let a = &file.averaging;
    let burn_in = match a.burn_in {
        Some(b) => b,
        None => default_burn_in(&ex.coeffs, &simulation.basis()?),
    };
    let averaging = AveragingSettings {
        burn_in,
        horizon: a.horizon.unwrap_or(200.0),
        dt: a.dt.unwrap_or(0.01),
        batch_length: a.batch_length,
    };

    let g = &file.diagnostics;
    let diagnostics = DiagnosticSettings {
        moment_orders: g.moment_orders.clone().unwrap_or_else(|| vec![1.0, 2.0]),
        epsilons: g.epsilons.clone().unwrap_or_else(|| epsilons.clone()),
        increment_time: g.increment_time.unwrap_or(0.5),
        increment_lags: g.increment_lags.clone().unwrap_or_else(|| vec![1e-3, 5e-4, 2.5e-4]),
        increment_dt: g.increment_dt.unwrap_or(2.5e-4),
        deltas: g.deltas.clone().unwrap_or_else(|| vec![0.1, 0.05, 0.025]),
    };

    let resolved = ResolvedConfig {
        example: name,
        simulation,
        initial,
        sweep: SweepSettings { epsilons },
        averaging,
        diagnostics,
        lipschitz,
    };
    validate(&resolved)?;
    Ok(resolved)
}

fn check_epsilons(label: &str, eps: &[f64]) -> Result<(), CliError> {
    if eps.is_empty() {
        return Err(CliError::Validation(format!("{label} is empty")));
    }
    if let Some(e) = eps.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
        return Err(CliError::Validation(format!(
            "{label}: epsilon must lie in (0, 1), got {e}"
        )));
    }
    Ok(())
}

fn validate(r: &ResolvedConfig) -> Result<(), CliError> {
    let setup = r.setup()?;
    r.simulation.validate_for(&setup.coeffs)?;
    check_epsilons("sweep.epsilons", &r.sweep.epsilons)?;
    check_epsilons("diagnostics.epsilons", &r.diagnostics.epsilons)?;
    let a = &r.averaging;
    if !(a.dt > 0.0 && a.burn_in >= 0.0 && a.horizon > a.burn_in) {
        return Err(CliError::Validation(format!(
            "averaging needs dt > 0 and horizon > burn_in >= 0 (dt {}, burn_in {}, horizon {})",
            a.dt, a.burn_in, a.horizon
        )));
    }
    if a.batch_length.is_some_and(|b| !(b > 0.0)) {
        return Err(CliError::Validation("averaging.batch_length must be positive".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve_str(text: &str, o: &Overrides) -> Result<ResolvedConfig, CliError> {
        resolve(&FileConfig::parse(text)?, o)
    }

    #[test]
    fn worked_example_defaults() {
        let r = resolve_str("", &Overrides::default()).unwrap();
        assert_eq!(r.example, DEFAULT_EXAMPLE);
        assert!((r.simulation.delta - 0.1f64.sqrt()).abs() < 1e-4);
        assert!((r.simulation.delta - 0.3162).abs() < 1e-12);
        assert_eq!(r.simulation.horizon, 1.0);
        let setup = r.setup().unwrap();
        assert_eq!(setup.x0, SpectralField::constant(DEFAULT_MODES, 2.0));
        assert_eq!(setup.y0, SpectralField::constant(DEFAULT_MODES, 1.0));
        assert_eq!(r.averaging.burn_in, 10.0);
    }

    #[test]
    fn epsilon_outside_unit_interval_is_rejected() {
        let o = Overrides {
            epsilons: Some(vec![1.5]),
            ..Default::default()
        };
        assert!(matches!(resolve_str("", &o), Err(CliError::Sim(_))));
        let err = resolve_str("[sweep]\nepsilons = [0.1, 2.0]\n", &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("(0, 1)"));
    }

    #[test]
    fn delta_must_align_with_dt() {
        let ok = "[simulation]\ndt = 0.01\ndelta = 0.05\n";
        assert_eq!(resolve_str(ok, &Overrides::default()).unwrap().simulation.delta, 0.05);
        let bad = "[simulation]\ndt = 0.01\ndelta = 0.055\n";
        assert!(resolve_str(bad, &Overrides::default()).is_err());
    }

    #[test]
    fn command_line_beats_file() {
        let o = Overrides {
            mc_samples: Some(7),
            seed: Some(9),
            ..Default::default()
        };
        let r = resolve_str("[simulation]\nmc_samples = 50\nseed = 3\nn_modes = 8\n", &o).unwrap();
        assert_eq!(
            (r.simulation.mc_samples, r.simulation.seed, r.simulation.n_modes),
            (7, 9, 8)
        );
        assert_eq!(r.simulation.grid_size, 17);
    }

    #[test]
    fn unknown_keys_report_their_line() {
        let err = FileConfig::parse("example = \"heat\"\n\n[simulation]\nepsilonn = 0.1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 4"), "{msg}");
        assert!(msg.contains("epsilonn"), "{msg}");
    }

    #[test]
    fn dump_round_trips() {
        let r = resolve_str("example = \"heat\"\n[initial]\nx0 = 3.0\n", &Overrides::default()).unwrap();
        let again = resolve_str(&r.to_toml().unwrap(), &Overrides::default()).unwrap();
        assert_eq!(r.setup().unwrap().x0, again.setup().unwrap().x0);
        assert_eq!(r.simulation, again.simulation);
        assert_eq!(r.diagnostics, again.diagnostics);
        assert_eq!(r.averaging, again.averaging);
    }

    #[test]
    fn hash_tracks_every_setting() {
        let a = resolve_str("", &Overrides::default()).unwrap();
        let b = resolve_str("[initial]\nx0 = 2.5\n", &Overrides::default()).unwrap();
        let c = resolve_str("[lipschitz]\nf1 = 2.0\n", &Overrides::default()).unwrap();
        assert_eq!(a.hash(), resolve_str("", &Overrides::default()).unwrap().hash());
        assert_ne!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn coefficient_vector_length_is_checked() {
        let err = resolve_str(
            "[simulation]\nn_modes = 4\n[initial]\nx0 = [1.0, 2.0]\n",
            &Overrides::default(),
        );
        assert!(err.unwrap_err().to_string().contains("2 coefficients"));
    }
}
