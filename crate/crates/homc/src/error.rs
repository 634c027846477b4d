//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HomcError>;

#[derive(Debug, Error)]
pub enum HomcError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid index: {0}")]
    InvalidIndex(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("mode {mode} out of range for order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    /// A column of the tensor fails the stochasticity requirements.
    /// `column` is the 1-based trailing index tuple (i2, ..., im).
    #[error("tensor is not stochastic at column {column:?}: {detail}")]
    NotStochastic { column: Vec<usize>, detail: String },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// The linear system block for target state `block` (1-based) is
    /// numerically singular; for mean first passage times this signals a
    /// non-ergodic chain.
    #[error("singular linear system in block for target state {block}")]
    SingularBlock { block: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
