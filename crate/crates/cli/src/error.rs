use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_BAD_INPUT: u8 = 2;
pub const EXIT_FIT_FAILED: u8 = 3;
pub const EXIT_INTERNAL: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("bad input: {0}")]
    BadInput(String),

    #[error("fit did not converge: {0}")]
    FitFailed(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::BadInput(_) => EXIT_BAD_INPUT,
            CliError::FitFailed(_) => EXIT_FIT_FAILED,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }

    pub fn bad(msg: impl Into<String>) -> Self {
        CliError::BadInput(msg.into())
    }
}

impl From<qdphase::Error> for CliError {
    fn from(e: qdphase::Error) -> Self {
        use qdphase::Error as E;
        match e {
            E::NotConverged { .. } => CliError::Internal(e.to_string()),
            _ => CliError::BadInput(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
