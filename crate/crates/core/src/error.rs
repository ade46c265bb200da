use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid lattice geometry: {0}")]
    Geometry(String),

    #[error("lattice cardinality overflows u64 (dilation {dilation})")]
    CardinalityOverflow { dilation: u64 },

    #[error("model is not contractive: rho + eta = {rho} + {eta} = {} >= 1", rho + eta)]
    NonContractive { rho: f64, eta: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value at Picard iteration {iteration}; model preconditions are violated")]
    NonFinite { iteration: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("swap index {index} is outside the enumeration ({len} variables)")]
    SwapIndex { index: usize, len: usize },

    #[error("{replicates} replicates cannot resolve tail probability {probability} (need at least {required})")]
    InsufficientReplicates {
        replicates: usize,
        probability: f64,
        required: usize,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
