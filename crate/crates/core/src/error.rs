use thiserror::Error;

/// Errors raised by the numerical library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in mode {mode}: expected {expected}, got {got}")]
    ModeMismatch {
        mode: usize,
        expected: usize,
        got: usize,
    },

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("tensor with {entries} entries exceeds the size cap of {cap}")]
    TooLarge { entries: u128, cap: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("argument {value} outside the safe domain (largest safe magnitude {limit})")]
    Domain { value: f64, limit: f64 },

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("no convergence after {iterations} iterations: {detail}")]
    NoConvergence { iterations: usize, detail: String },

    /// The integrator produced NaN or infinity. `last_params` is the last
    /// finite state, reached at time `t`.
    #[error("non-finite state at step {step} (last finite state at t = {t})")]
    NonFinite {
        step: usize,
        t: f64,
        last_params: Vec<Vec<f64>>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
