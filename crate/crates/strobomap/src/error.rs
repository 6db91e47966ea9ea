use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("collision: distance {distance:.3e} to a primary below radius {radius:.3e} at t = {t:.6}")]
    Collision { distance: f64, radius: f64, t: f64 },

    #[error("step size underflow at t = {t:.6} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("integration exceeded max_time = {0}")]
    MaxTimeExceeded(f64),

    #[error("Newton did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("spectrum classification failed: {0}")]
    Classification(String),

    #[error("degenerate spectrum: {0}")]
    Degenerate(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// CLI exit code: 2 for validation/config problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Io(_) | Error::Json(_) => 2,
            _ => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Collision { .. } => "collision",
            Error::StepUnderflow { .. } => "step_underflow",
            Error::MaxTimeExceeded(_) => "max_time_exceeded",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Singular(_) => "singular",
            Error::Classification(_) => "classification",
            Error::Degenerate(_) => "degenerate",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
