use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FluxError>;

/// Every failure the simulator can report.
///
/// The variants map one-to-one onto the status codes exposed by the C ABI, so
/// adding a variant means adding a code there as well.
#[derive(Debug, Error)]
pub enum FluxError {
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("eigensolver failed on a {dim}x{dim} matrix: {reason}")]
    Numerical { dim: usize, reason: String },

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("labeling error: {0}")]
    Labeling(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("compensation synthesis failed at t = {t} us (sample {index}): {reason}")]
    Synthesis { index: usize, t: f64, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {location}: {reason}")]
    Config {
        path: PathBuf,
        location: String,
        reason: String,
    },

    #[error("usage: {0}")]
    Usage(String),
}

impl FluxError {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        FluxError::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub(crate) fn ensure_finite(field: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(FluxError::validation(field, format!("must be finite, got {value}")))
    }
}

pub(crate) fn ensure_positive(field: &str, value: f64) -> Result<()> {
    ensure_finite(field, value)?;
    if value > 0.0 {
        Ok(())
    } else {
        Err(FluxError::validation(field, format!("must be > 0, got {value}")))
    }
}

pub(crate) fn ensure_non_negative(field: &str, value: f64) -> Result<()> {
    ensure_finite(field, value)?;
    if value >= 0.0 {
        Ok(())
    } else {
        Err(FluxError::validation(field, format!("must be >= 0, got {value}")))
    }
}
