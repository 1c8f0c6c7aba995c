use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid molecule: {0}")]
    InvalidMolecule(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{n_qubits} qubits exceeds the dense-matrix limit of {limit}")]
    DimensionGuard { n_qubits: usize, limit: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),

    #[error("cannot route pair ({0}, {1}) on the requested topology")]
    Unroutable(usize, usize),

    #[error("initial state {state} has magnetization {magnetization}, expected > 0")]
    NonPositiveMagnetization { state: String, magnetization: f64 },

    #[error("missing sector for initial state {0}")]
    MissingSector(String),

    #[error("invalid noise model: {0}")]
    InvalidNoise(String),

    #[error("invalid rate matrix: {0}")]
    InvalidRates(String),

    #[error("empty time grid")]
    EmptyGrid,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
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

    /// True for errors caused by numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}
