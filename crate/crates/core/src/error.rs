use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate basis: every radial basis activation underflows at phase {z}")]
    DegenerateBasis { z: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("ill-conditioned system: {0}")]
    IllConditioned(String),
    #[error("insufficient data: need at least {needed} samples, got {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("conditioning failed: {0}")]
    Conditioning(String),
    #[error("degenerate dataset: standard deviation is zero")]
    DegenerateDataset,
    #[error("trajectory {index}: {source}")]
    Trajectory {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("model file field `{field}`: {message}")]
    Format { field: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure classes, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn format(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Wraps the error with the index of the trajectory it came from.
    pub fn in_trajectory(self, index: usize) -> Self {
        Error::Trajectory {
            index,
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidConfig(_) => ErrorClass::Usage,
            Error::DegenerateBasis { .. } | Error::IllConditioned(_) | Error::Conditioning(_) => ErrorClass::Numerical,
            Error::Trajectory { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }
}
