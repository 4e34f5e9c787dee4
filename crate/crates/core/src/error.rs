use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented precondition.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// The requested computation would exceed a configured size cap.
    #[error("resource cap exceeded: {what} needs {needed}, cap is {cap}")]
    ResourceCap {
        what: &'static str,
        needed: f64,
        cap: f64,
    },

    /// An iterative solver did not converge.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// A coded event has zero probability under the model.
    #[error("zero-probability event at step {step}")]
    ZeroProbability { step: usize },

    /// A bitstream could not be decoded into a valid sequence.
    #[error("corrupt bitstream: {0}")]
    CorruptStream(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
