use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A size or range precondition of a formula does not hold.
    #[error("regime violation: {0}")]
    Regime(String),

    #[error("matrix is not symmetric (max |A - A^T| = {0:.3e})")]
    NotSymmetric(f64),

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("duplicate index {0}")]
    DuplicateIndex(usize),

    /// A numerical check (unitarity, normalization, ...) failed.
    #[error("numerical invariant violated: {0}")]
    Invariant(String),

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("malformed record file: {0}")]
    Format(String),
}

impl Error {
    /// True for errors caused by the caller's parameters rather than by the
    /// numerics going wrong.
    pub fn is_precondition(&self) -> bool {
        matches!(
            self,
            Error::Dimension(_)
                | Error::Parameter(_)
                | Error::Regime(_)
                | Error::NotSymmetric(_)
                | Error::IndexOutOfRange { .. }
                | Error::DuplicateIndex(_)
                | Error::UnknownExperiment(_)
        )
    }
}
