use thiserror::Error;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not symmetric (defect {defect:e} > {tolerance:e})")]
    NotSymmetric { defect: f64, tolerance: f64 },

    #[error("feature matrix is rank deficient (smallest Gram eigenvalue {lambda_min:e})")]
    RankDeficient { lambda_min: f64 },

    #[error("invalid problem instance: {0}")]
    InvalidInstance(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("action {action} has zero probability under the current policy")]
    ZeroProbabilityAction { action: usize },

    #[error("ordering-witness LP did not converge after {iterations} pivots")]
    LpIndeterminate { iterations: usize },

    #[error("operation requires {0}")]
    Unsupported(String),

    #[error("instance generation failed after {attempts} draws (acceptance rate {acceptance_rate})")]
    GenerationFailed { attempts: usize, acceptance_rate: f64 },

    #[error("unknown registry id `{0}`")]
    UnknownInstance(String),

    #[error("serialization: {0}")]
    Serde(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
