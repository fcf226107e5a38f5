use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the pipeline and its numeric kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error(transparent)]
    Ppm(#[from] crate::image_io::PpmError),

    #[error(transparent)]
    Format(#[from] crate::format::FormatError),

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    /// True for failures caused by NaN/inf rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::Diverged { .. })
    }

    /// True for malformed files or unusable input data.
    pub fn is_data(&self) -> bool {
        matches!(
            self,
            Error::Ppm(_) | Error::Format(_) | Error::Io(_) | Error::Shape(_) | Error::InvalidArgument(_)
        )
    }
}
