use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("capacity exceeded: {what} = {requested} > limit {limit}")]
    Capacity {
        what: &'static str,
        requested: u128,
        limit: u128,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration not in basis: {0}")]
    NotFound(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite amplitude at t = {t}")]
    NonFinite { t: f64 },

    #[error("norm drift {drift:e} at t = {t} exceeds abort threshold {limit:e}")]
    NormDrift { t: f64, drift: f64, limit: f64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("qubit gap vanishes at t = {t} (|h(t)| = {field:e})")]
    DegenerateGap { t: f64, field: f64 },

    #[error("fit rejected: {0}")]
    Fit(String),

    #[error("config error{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(line: Option<usize>, message: impl Into<String>) -> Self {
        Error::Config {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::Capacity { .. } | Error::Domain(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
