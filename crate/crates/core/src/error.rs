use std::path::PathBuf;

use crate::estimation::GridPoint;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure surfaced by the library. The CLI maps each variant onto a
/// stable exit code through [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("non-stationary model: {0}")]
    NonStationary(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("rank condition failed: {0}")]
    Rank(String),

    #[error("no admissible grid candidate: {reason}")]
    NoAdmissibleCandidate { reason: String, profile: Vec<GridPoint> },

    #[error("eigen-solver did not converge for a {0}x{0} matrix")]
    EigenNonConvergence(usize),

    #[error("Cholesky factorization failed: {0}")]
    Cholesky(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),
}

impl Error {
    /// Stable process exit codes: 1 generic, 2 model validity,
    /// 3 rank/identification, 4 IO/parse.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidModel(_) | Error::NonStationary(_) => 2,
            Error::Singular(_) | Error::Rank(_) | Error::NoAdmissibleCandidate { .. } => 3,
            Error::Io { .. } | Error::Parse { .. } | Error::Config(_) => 4,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
