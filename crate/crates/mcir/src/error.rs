//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on user-supplied values failed.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Array dimensions do not line up between operands.
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    /// Mask calibration could not reach the requested acceleration.
    #[error(
        "mask calibration failed: target R={target:.2}, achievable range [{min:.2}, {max:.2}]"
    )]
    MaskCalibration { target: f64, min: f64, max: f64 },

    /// Percentile normalization hit a constant input (hi == lo).
    #[error("degenerate normalization: percentile range collapsed at {0}")]
    DegenerateNormalization(f64),

    /// Training loss became non-finite even after the retry with reduced step size.
    #[error("training diverged at epoch {epoch}: loss={loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("container: {0}")]
    Container(#[from] crate::container::ContainerError),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            got: got.into(),
        }
    }
}
