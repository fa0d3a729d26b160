use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(
        "quadrature did not converge: estimate {estimate:e}, error bound {error_bound:e} after {intervals} intervals"
    )]
    Quadrature {
        estimate: f64,
        error_bound: f64,
        intervals: usize,
    },

    #[error("dense assembly needs {rows} rows but the cap is {cap}; reduce n or skip the dense oracle checks")]
    DenseCapExceeded { rows: usize, cap: usize },

    #[error("{solver} did not converge in {iterations} iterations (last residual {residual:e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error(
        "ground state has negative part of mass {negative_mass:e}; the ground state may be singular or the truncation too small"
    )]
    Positivity { negative_mass: f64 },

    #[error("non-finite state at step {step} (t = {time}); try a smaller dt")]
    Blowup { step: usize, time: f64 },

    #[error("negative density {value:e} at step {step} (t = {time}); try a smaller dt")]
    Negativity { step: usize, time: f64, value: f64 },

    #[error("mass of the linear flow vanished at t = {time}; raise R or reduce T")]
    Extinction { time: f64 },

    #[error("rate fit needs at least {needed} usable samples, found {found}")]
    InsufficientData { needed: usize, found: usize },

    #[error("malformed table {path}: {reason}")]
    Table { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
