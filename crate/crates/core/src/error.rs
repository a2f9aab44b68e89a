use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),

    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: &'static str },

    #[error("{what} is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { what: &'static str, asymmetry: f64 },

    #[error("source index {index} out of range for {len} sources")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("frequency weight {index} is negative or not finite ({value})")]
    NegativeWeight { index: usize, value: f64 },

    #[error("asymptotic variance is not differentiable here: information matrix is singular")]
    NonDifferentiable,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("search space of {size} candidates exceeds the limit of {limit}")]
    SearchSpaceTooLarge { size: u128, limit: u128 },

    #[error("source set {0:?} does not span the target direction")]
    NotSpanning(Vec<usize>),

    #[error("source set {0:?} is spanning but not minimally spanning")]
    NotMinimal(Vec<usize>),

    #[error("source set {0:?} is not subspace-optimal")]
    NotSubspaceOptimal(Vec<usize>),

    #[error(
        "no learning trap exists on {0:?}: it spans the whole state space but is not the best set"
    )]
    NoTrapExists(Vec<usize>),

    #[error("unique minimizer assumption fails: {0}")]
    UniqueMinimizerViolated(String),

    #[error("frequency optimizer did not converge: relative duality gap {gap:e} after {iterations} iterations")]
    NonConvergence { gap: f64, iterations: usize },

    #[error("invalid intervention: {0}")]
    InvalidIntervention(String),

    #[error("scenario error at {path}: {reason}")]
    Scenario { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn scenario(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Scenario {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
