use alloc::string::String;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Two operands disagree on a dimension.
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    /// Input data violates a documented invariant.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Every trial was removed by artifact rejection.
    #[error("all {0} trials were rejected; lower the peak-to-peak threshold")]
    AllTrialsRejected(usize),

    /// A linear system could not be solved stably.
    #[error("numerically singular: {0}")]
    Singular(String),

    /// A NaN or infinity appeared during computation.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Score maps cover different category sets.
    #[error("category mismatch: {0}")]
    CategoryMismatch(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            what,
            expected,
            found,
        }
    }
}
