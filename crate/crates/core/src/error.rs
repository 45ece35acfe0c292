use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("eigensolver did not converge after {iterations} iterations (last change {last_change:.3e})")]
    EigenNotConverged { iterations: usize, last_change: f64 },

    #[error("steady iteration did not converge after {iterations} iterations (last change {last_change:.3e}, residual {residual:.3e})")]
    SteadyNotConverged {
        iterations: usize,
        last_change: f64,
        residual: f64,
        last_rho: Vec<f64>,
    },

    #[error("infeasible shooting parameters: {0}")]
    Infeasible(String),

    #[error("no compactly supported steady state: {0}")]
    NoCompactSteadyState(String),

    #[error("time step failure at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },

    #[error("particle ordering violated: {0}")]
    OrderingViolation(String),

    #[error("root finding failed: {0}")]
    RootNotFound(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl LabError {
    /// Process exit code: 1 for bad input, 2 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Usage(_) | LabError::InvalidParameter(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
