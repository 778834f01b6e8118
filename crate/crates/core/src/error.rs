use thiserror::Error;

/// Errors raised by the inference library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PosiError {
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("design submatrix is rank deficient (smallest/largest singular value ratio {ratio:.3e})")]
    RankDeficient { ratio: f64 },

    #[error("need n > d to estimate sigma from the full model (n = {n}, d = {d})")]
    InsufficientSamples { n: usize, d: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("candidate budgets carry different total slack tau + nu ({first} vs {other})")]
    MixedSlack { first: f64, other: f64 },

    #[error("degenerate significance level: {0}")]
    DegenerateLevel(String),

    #[error("level weights must be positive and sum to one: {0:?}")]
    BadWeights([f64; 3]),

    #[error("unregistered Orlicz function `{0}`")]
    UnregisteredOrlicz(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("every remaining candidate is collinear with the selected columns (step {step})")]
    AllCandidatesCollinear { step: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, PosiError>;

pub(crate) fn invalid(msg: impl Into<String>) -> PosiError {
    PosiError::InvalidParameter(msg.into())
}
