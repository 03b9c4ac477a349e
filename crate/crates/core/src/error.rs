use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{qubits} qubits exceeds the configured cap of {cap} (override with PQASLAB_CAP)")]
    CapExceeded { qubits: usize, cap: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("invalid register layout: {0}")]
    InvalidLayout(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("matrix is not unitary (max |U^dag U - I| = {0:.3e})")]
    NotUnitary(f64),

    #[error("Kraus operators are not trace preserving (max |sum K^dag K - I| = {0:.3e})")]
    NotTracePreserving(f64),

    #[error("operator is not an orthogonal projector (max deviation {0:.3e})")]
    NotAProjector(f64),

    #[error("channel is not mixed-unitary")]
    NotMixedUnitary,

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("malformed record: {0}")]
    MalformedRecord(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Errors caused by a bad request rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::CapExceeded { .. }
                | Error::InvalidParameter { .. }
                | Error::UnknownExperiment(_)
                | Error::SizeLimit(_)
                | Error::Json(_)
                | Error::InvalidLayout(_)
                | Error::Unsupported(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
