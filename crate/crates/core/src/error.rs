use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid mode {0}, expected 1, 2 or 3")]
    InvalidMode(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rank {rank} exceeds dimension {dim} in mode {mode}")]
    RankExceedsDimension { mode: usize, rank: usize, dim: usize },

    #[error("observation set is empty")]
    EmptyObservation,

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("line search for the anomaly update exhausted {0} reductions")]
    LineSearchExhausted(usize),

    #[error("could not place {wanted} non-overlapping anomaly blocks after {attempts} attempts")]
    BlockPlacement { wanted: usize, attempts: usize },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
