use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("chain length {0} is outside the supported range 2..=256")]
    InvalidLength(usize),
    #[error("site {site} out of range for a chain of {len} sites")]
    SiteOutOfRange { site: usize, len: usize },
    #[error("sites {i} and {j} carry equal spins; exchange needs opposite spins")]
    EqualSpins { i: usize, j: usize },
    #[error("cannot enumerate L = {len}; the limit is {max}")]
    TooLarge { len: usize, max: usize },
    #[error("the zero-magnetization sector needs an even chain length, got {0}")]
    OddSector(usize),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("sector is not closed under the operator: {0}")]
    SectorNotClosed(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("requested {k} eigenpairs from a {dim}-dimensional space")]
    TooManyEigenpairs { k: usize, dim: usize },
    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),
    #[error("empty sample set")]
    EmptySamples,
    #[error("numerical failure at epoch {epoch}: {message}")]
    Numerical { epoch: usize, message: String },
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit status: 2 for bad input, 3 for numerical aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical { .. } | Error::NoConvergence(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
