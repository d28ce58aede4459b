use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum SimError {
    /// An input or configuration value violates a precondition.
    #[error("configuration error: {0}")]
    Config(String),

    /// The state became non-finite while stepping.
    #[error("numerical blow-up at t = {time:.6}{}", seed_suffix(*.seed, *.path))]
    BlowUp {
        time: f64,
        seed: Option<u64>,
        path: Option<u64>,
    },

    /// A recorded noise path does not fit the run it is replayed into.
    #[error("noise replay mismatch: {0}")]
    ReplayMismatch(String),

    /// No built-in example is registered under this name.
    #[error("unknown example '{0}'")]
    UnknownExample(String),

    /// Too many Monte Carlo paths blew up to trust the aggregate.
    #[error("{excluded} of {total} paths excluded at epsilon = {epsilon} (limit 1%)")]
    TooManyExclusions {
        epsilon: f64,
        excluded: usize,
        total: usize,
    },
}

fn seed_suffix(seed: Option<u64>, path: Option<u64>) -> String {
    match (seed, path) {
        (Some(s), Some(p)) => format!(" (seed {s}, path {p})"),
        (Some(s), None) => format!(" (seed {s})"),
        _ => String::new(),
    }
}

impl SimError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        SimError::Config(msg.into())
    }

    /// Attach the reproduction seed and path index to a blow-up.
    pub fn with_origin(self, seed: u64, path: u64) -> Self {
        match self {
            SimError::BlowUp { time, .. } => SimError::BlowUp {
                time,
                seed: Some(seed),
                path: Some(path),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
