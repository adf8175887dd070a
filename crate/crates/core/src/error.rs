use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigenvalue computation failed: {0}")]
    Eigen(String),

    #[error("matrix is numerically singular: {0}")]
    Singular(&'static str),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("LMIs infeasible at gamma = {gamma} (solver status: {status})")]
    Infeasible { gamma: f64, status: String },

    #[error("certificate verification failed: achieved H-inf norm {achieved} exceeds gamma = {gamma}")]
    VerificationFailed { achieved: f64, gamma: f64 },

    #[error("SDP backend failure: {0}")]
    Solver(String),

    #[error("degenerate region: {0}")]
    DegenerateRegion(&'static str),

    #[error("singular rank-two update at ({i}, {j})")]
    SingularUpdate { i: usize, j: usize },

    #[error("no feasible gamma below {cap}")]
    NoFeasibleGamma { cap: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
