use pllab_core::Error;
use thiserror::Error as ThisError;

/// Failures that stop a run before a report is written.
#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for usage and configuration problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFiniteValue(_)
            | Error::StepSizeUnderflow { .. }
            | Error::NonMonotoneFlow { .. }
            | Error::NotConverged { .. }
            | Error::NoWitnessFound
            | Error::NoMinimizerFound
            | Error::RadiusNotFound => CliError::Numerical(e),
            _ => CliError::Config(e.to_string()),
        }
    }
}
