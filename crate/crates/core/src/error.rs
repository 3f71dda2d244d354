use thiserror::Error;

/// Errors raised anywhere in the calibration pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecastError {
    /// A distribution or routine was called outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input shapes disagree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// An integrand returned NaN or infinity.
    #[error("integrand is not finite at x = {abscissa}")]
    NonFiniteIntegrand { abscissa: f64 },

    /// Adaptive quadrature ran out of panels before meeting tolerance.
    #[error("subdivision budget exhausted: estimate {estimate} with error {err_est}")]
    SubdivisionLimit { estimate: f64, err_est: f64 },

    /// Continuous likelihood requires every source score to be nonzero.
    #[error("zero source score violates a.s. condition (observation {index})")]
    ZeroScore { index: usize },

    #[error("rank deficient design: {0}")]
    RankDeficient(String),

    #[error("separation: logistic coefficients diverged (norm {norm:.3e})")]
    Separation { norm: f64 },

    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("zero-variance column {column}")]
    ZeroVariance { column: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate latent sample")]
    DegenerateLatent,

    #[error("degenerate denominator vector")]
    DegenerateDenominator,

    #[error("log target is not finite at the initial state")]
    NonFiniteInit,

    #[error("AUC requires both classes in the evaluation set")]
    SingleClass,

    #[error("model container: {0}")]
    Container(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for RecastError {
    fn from(e: std::io::Error) -> Self {
        RecastError::Io(e.to_string())
    }
}

impl From<csv::Error> for RecastError {
    fn from(e: csv::Error) -> Self {
        RecastError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, RecastError>;
