use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("simulation blew up at level {level}, step {step}; consider clamping the step size")]
    BlowUp { level: usize, step: u64 },

    #[error("resizers are not admissible: {0}")]
    NotAdmissible(String),

    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("budget infeasible: coarse size {0:e} exceeds 2^62")]
    BudgetInfeasible(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular linear system")]
    Singular,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
