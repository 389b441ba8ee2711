use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty availability set")]
    EmptyAvailability,

    #[error("exact mode exceeds enumeration cap; use MonteCarlo (K = {0}, cap = {cap})", cap = crate::weights::MAX_EXACT_ARMS)]
    EnumerationCap(usize),

    #[error("arm count {0} outside supported range 2..={max}", max = crate::weights::MAX_ARMS)]
    ArmCount(usize),

    #[error("invalid weight vector: {0}")]
    InvalidWeights(String),

    #[error("non-finite or negative estimated loss at arm {0}")]
    InvalidLoss(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("played arm {0} is not in the availability set")]
    ArmNotAvailable(usize),

    #[error("empty subset history")]
    EmptyHistory,

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("availability model produced {0} consecutive empty sets")]
    RejectionLimit(u64),

    #[error("covariance is not positive definite")]
    NotPositiveDefinite,

    #[error("{violations} of {trials} trials exceeded the bound (allowed fraction {delta})")]
    AuditFailed { violations: usize, trials: usize, delta: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{0}")]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Short stable identifier printed by the CLI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyAvailability => "empty_availability",
            Error::EnumerationCap(_) => "enumeration_cap",
            Error::ArmCount(_) => "arm_count",
            Error::InvalidWeights(_) => "invalid_weights",
            Error::InvalidLoss(_) => "invalid_loss",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::ArmNotAvailable(_) => "arm_not_available",
            Error::EmptyHistory => "empty_history",
            Error::LengthMismatch(_) => "length_mismatch",
            Error::RejectionLimit(_) => "rejection_limit",
            Error::NotPositiveDefinite => "not_positive_definite",
            Error::AuditFailed { .. } => "audit_failed",
            Error::Config { .. } => "config",
            Error::Csv(_) => "csv",
            Error::Io(_) => "io",
        }
    }
}
