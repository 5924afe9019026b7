use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("integration did not reach steady state within horizon (last relative change {last_change:e})")]
    NotConverged { last_change: f64 },

    #[error("outside validity domain: {0}")]
    Domain(String),

    #[error("unstable lock gains: residual {residual:e} exceeded 10x drift amplitude {amplitude:e} at step {step}")]
    UnstableGain {
        step: usize,
        residual: f64,
        amplitude: f64,
    },

    #[error("no fringe detected: {0}")]
    NoFringe(String),

    #[error("grid error: {0}")]
    Grid(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
