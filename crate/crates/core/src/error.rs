use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range for {m} constraints")]
    IndexOutOfRange { index: usize, m: usize },

    #[error("point lies outside the hard set Y")]
    OutsideHardSet,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("relaxed feasible set X_gamma is empty for gamma = {gamma}")]
    InfeasibleRelaxation { gamma: f64 },

    #[error("tightened feasible set X_-gamma is empty for gamma = {gamma}")]
    InteriorRelaxationInfeasible { gamma: f64 },

    #[error("every probe is feasible; no metric regularity information")]
    NoInformation,

    #[error("problem has no constraints")]
    NoConstraints,

    #[error("set has no accepted points")]
    EmptySet,

    #[error("missing ingredient: {0}")]
    Missing(&'static str),

    #[error("premise invalid: {0}")]
    PremiseInvalid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
