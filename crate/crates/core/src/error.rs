use thiserror::Error;

/// Errors raised by the estimation and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad grid, bandwidth, rate parameters, unknown kinds.
    #[error("configuration error: {0}")]
    Config(String),

    /// The noise Fourier transform is too small to divide by on the kernel support.
    #[error("ill-posed deconvolution: |F[eta]| = {magnitude:e} at frequency {frequency}")]
    IllPosed { frequency: f64, magnitude: f64 },

    /// The statistical model is not admissible (negative density, positivity guard).
    #[error("model error: {0}")]
    Model(String),

    /// The sample does not support the requested computation.
    #[error("data error: {0}")]
    Data(String),

    /// Trial failure inside a rate experiment, with the context it happened in.
    #[error("trial n={n} replicate={replicate} failed: {source}")]
    Trial {
        n: usize,
        replicate: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
