//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Evaluation of a singular kernel at a forbidden point (x = 0 or a
    /// coincident pair with the exact Coulomb kernel).
    #[error("singular kernel evaluation: {0}")]
    Singularity(String),

    /// Malformed or inconsistent input data.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Time step violates a stability or drift-cap rule.
    #[error("step size violation: {0}")]
    StepSize(String),

    /// A quantity was requested that the producing run did not retain.
    #[error("unavailable: {0}")]
    Unavailable(String),

    /// Estimator cannot be formed from the sample (degenerate geometry).
    #[error("degenerate sample: {0}")]
    Degenerate(String),

    /// Numerical failure inside a solver (blow-up monitor, non-finite state).
    #[error("solver failure: {0}")]
    Solver(String),

    /// Configuration file rejected by validation.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code class for the CLI: 2 = validation, 3 = numerical,
    /// 4 = I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Config(_) => 2,
            Error::Singularity(_)
            | Error::StepSize(_)
            | Error::Unavailable(_)
            | Error::Degenerate(_)
            | Error::Solver(_) => 3,
            Error::Io(_) => 4,
        }
    }
}
