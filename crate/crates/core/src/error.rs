use thiserror::Error;

/// Errors raised by the estimators, solvers and harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("objective became non-finite at iteration {iteration} (step size 1/{gamma_u} too large)")]
    Divergence { iteration: usize, gamma_u: f64 },

    #[error("restricted Gram matrix is singular on support of size {support}")]
    RankDeficient { support: usize },

    #[error(
        "concentration bound not applicable: log(1/delta)/n = {ratio:.6} > 1/8; \
         increase n to at least {required_n} or increase delta"
    )]
    Calibration { ratio: f64, required_n: usize },

    #[error("relative gain undefined: RA-Lasso error {err_ra} does not exceed oracle error {err_oracle}")]
    DegenerateGain { err_ra: f64, err_oracle: f64 },

    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: u64, message: String },

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("replication {replication} (seed {seed}) failed: {source}")]
    Replication {
        replication: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
