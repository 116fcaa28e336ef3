use thiserror::Error;

/// Errors raised by the numerical layers of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("quadrature failed to reach tolerance: estimated error {estimate:.3e} > {tolerance:.3e} ({context})")]
    QuadratureFailure {
        estimate: f64,
        tolerance: f64,
        context: String,
    },

    #[error("certification failed for drift `{drift}`: {detail}")]
    CertificationFailure { drift: String, detail: String },

    #[error("Picard iteration did not converge: last sup-change {last_change:.3e} after {iterations} sweeps (tol {tol:.1e})")]
    NonConvergence {
        iterations: usize,
        last_change: f64,
        tol: f64,
        changes: Vec<f64>,
    },

    #[error("mass defect {defect:.3e} at t = {time} exceeds {limit:.1e}")]
    MassDefect { time: f64, defect: f64, limit: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no admissible pairs for the requested quotient: {0}")]
    NoAdmissiblePairs(String),

    #[error("config error at key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
