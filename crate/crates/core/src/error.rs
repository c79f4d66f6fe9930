use thiserror::Error;

/// Errors raised while validating inputs or running a computation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("covariance {matrix} is not Hermitian (max |Q - Q^H| = {deviation:e})")]
    NotHermitian { matrix: String, deviation: f64 },

    #[error("covariance {matrix} is not positive semidefinite (min eigenvalue = {min_eigenvalue:e})")]
    NotPsd { matrix: String, min_eigenvalue: f64 },

    #[error("noise variance of link {link} must be positive, got {value}")]
    NonPositiveNoise { link: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("signal demand {target} exceeds the maximum achievable power {p_max}")]
    InfeasibleSignal { target: f64, p_max: f64 },

    #[error("rate r1 = {r1} exceeds the single-user rate {su_rate}")]
    InfeasibleRate { r1: f64, su_rate: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
