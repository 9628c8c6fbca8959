use thiserror::Error;

pub type Result<T, E = DftcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DftcError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid fault spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("simulation diverged: {context} (state {state:?})")]
    Divergence { context: String, state: Vec<f64> },

    #[error("riccati iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("closed loop is unstable: spectral radius {spectral_radius}")]
    Unstable { spectral_radius: f64 },

    #[error("configuration is unobservable: det(W) = {det:e}")]
    Unobservable { det: f64 },

    #[error("non-finite values in {location}")]
    Numeric { location: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl DftcError {
    pub(crate) fn numeric(location: impl Into<String>) -> Self {
        DftcError::Numeric {
            location: location.into(),
        }
    }
}
