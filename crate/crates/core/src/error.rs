use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the reduction pipeline.
#[derive(Debug, Error)]
pub enum MorError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("point {s} lies within {distance:.3e} of the eigenvalue of mode ({n},{m})")]
    PoleProximity {
        s: Complex64,
        n: usize,
        m: usize,
        distance: f64,
    },

    #[error("pencil sE - A is singular at s = {s}")]
    SingularPencil { s: Complex64 },

    #[error("E_r is ill-conditioned (condition estimate {estimate:.3e}); choose different interpolation points or directions")]
    Conditioning { estimate: f64 },

    #[error("rank-deficient basis: {0}")]
    RankDeficient(String),

    #[error("poles are not semi-simple: {0}")]
    SemiSimplicity(String),

    #[error("system is unstable (max Re(pole) = {max_real_part:.6e})")]
    Unstable { max_real_part: f64 },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<MorError>,
    },

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MorError>;
