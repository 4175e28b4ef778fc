use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no convergence after {iterations} iterations (max residual {max_residual:.3e})")]
    NoConvergence {
        iterations: usize,
        max_residual: f64,
        best_offsets: Vec<f64>,
        residuals: Vec<f64>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
