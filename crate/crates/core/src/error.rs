//! Crate-wide error type.
//!
//! Every fallible operation returns [`Error`]; the [`ErrorClass`] groups
//! variants into the coarse categories the CLI maps to exit codes.

use thiserror::Error;

/// Coarse failure category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad configuration: unknown keys, invalid method names, bad layer
    /// selections, mismatched cohort sizes.
    Config,
    /// Bad or insufficient data: empty corpora, label range violations,
    /// short utterances, malformed files.
    Data,
    /// Numerical failure: NaN/Inf, divergence, singular matrices with no
    /// fallback.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error(
        "sequence of {got} frames is shorter than the receptive field; \
         at least {required} frames are required"
    )]
    ReceptiveField { got: usize, required: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("utterance '{utt}' has {got} frames, shorter than segment length {need}")]
    ShortUtterance { utt: String, got: usize, need: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed file '{path}': {reason}")]
    Format { path: String, reason: String },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::Shape(_)
            | Error::LabelOutOfRange { .. }
            | Error::ReceptiveField { .. }
            | Error::Precondition(_)
            | Error::ShortUtterance { .. }
            | Error::Data(_)
            | Error::Io(_)
            | Error::Format { .. } => ErrorClass::Data,
            Error::Numeric(_) => ErrorClass::Numeric,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
