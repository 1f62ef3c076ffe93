use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },

    #[error("invalid instance: {0}")]
    Invalid(String),

    #[error("brute-force solver refuses {segments} segments (limit {limit})")]
    TooLarge { segments: usize, limit: usize },

    #[error(
        "QCP did not converge in {iterations} iterations (duality gap {residual:.3e}, objective {objective:.6e})"
    )]
    NotConverged {
        iterations: usize,
        residual: f64,
        objective: f64,
        best: Box<crate::model::FractionalSolution>,
    },

    #[error("ground-truth matrix has zero variance; R-squared is undefined")]
    ZeroVariance,

    #[error("zone map mismatch: {0}")]
    ZoneMismatch(String),

    #[error("unknown route `{0}`")]
    UnknownRoute(String),

    #[error("synthetic configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn input(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Input {
            path: path.into(),
            message: message.into(),
        }
    }
}
