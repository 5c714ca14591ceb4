//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by sketch construction, estimation, serialization and
/// simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter was outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two sketches cannot be merged; names the first mismatched field.
    #[error("incompatible sketches: {field} differs")]
    IncompatibleSketch {
        /// The first field that failed the compatibility check.
        field: &'static str,
    },

    /// A serialized sketch failed validation.
    #[error("corrupt sketch at byte {offset}: {reason}")]
    CorruptSketch {
        /// Byte offset of the offending data.
        offset: usize,
        /// What went wrong there.
        reason: String,
    },

    /// The sketch has seen no items (or has unset registers), so the
    /// requested estimator is undefined.
    #[error("empty sketch: estimator undefined without occupied registers")]
    EmptySketch,

    /// A simulation index window does not cover the active cell range.
    #[error("invalid window [{lo}, {hi}]: {reason}")]
    InvalidWindow {
        /// Lower cell index of the rejected window.
        lo: i64,
        /// Upper cell index of the rejected window.
        hi: i64,
        /// Why the window was rejected.
        reason: String,
    },

    /// A numerical routine produced non-finite intermediate values.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
