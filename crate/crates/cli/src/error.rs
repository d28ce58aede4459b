use slowfast_core::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("{0}")]
    Io(String),

    #[error(transparent)]
    Sim(#[from] SimError),

    #[error("gate failed: {0}")]
    Gate(String),
}

impl CliError {
    /// 0 success, 1 validation or I/O, 2 numerical blow-up, 3 failed gate.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 1,
            CliError::Sim(SimError::BlowUp { .. } | SimError::TooManyExclusions { .. }) => 2,
            CliError::Sim(_) => 1,
            CliError::Gate(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
