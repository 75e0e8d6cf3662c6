use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    Model(String),
    #[error("invalid configuration at `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("invalid network shape (d={d}, layers={layers}, width={width})")]
    InvalidShape { d: usize, layers: usize, width: usize },
    #[error("parameter count mismatch: expected {expected}, found {found}")]
    ParamCount { expected: usize, found: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("point outside the truncation region: {0}")]
    OutsideRegion(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("series did not converge within {terms} terms (tail mass {tail:e})")]
    NoConvergence { terms: usize, tail: f64 },
    #[error("training diverged at step {step}, epoch {epoch}: {detail}")]
    Diverged { step: usize, epoch: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { key: key.into(), reason: reason.into() }
    }
}
