use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is rank deficient: sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e}")]
    RankDeficient { sigma_min: f64, sigma_max: f64 },

    #[error("row {0} has zero norm")]
    ZeroRow(usize),

    #[error("weight {index} is {value}; row probabilities must be positive and finite")]
    InvalidWeight { index: usize, value: f64 },

    #[error("operation requires a noise vector but the model is noise-free")]
    NoNoise,

    #[error("I - P is singular (lambda_max(P) = {lambda_max:e}); the matrix is likely rank deficient")]
    SingularSystem { lambda_max: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("dense lifting requires n <= {max}, got n = {n}")]
    SizeGuard { n: usize, max: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
