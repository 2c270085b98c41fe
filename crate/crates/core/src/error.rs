use thiserror::Error;

/// Errors raised by the estimation and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("invalid weight {0}: weights must be positive and finite")]
    InvalidWeight(f64),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid bandwidth {0}: must be positive")]
    InvalidBandwidth(f64),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionError { expected: usize, found: usize },
    #[error("cannot form {strata} strata from {records} records")]
    TooManyStrata { strata: usize, records: usize },
    #[error("ASMD is infinite: both groups are constant with different means")]
    InfiniteAsmd,
    #[error("no conditioning value qualifies for an equating transform")]
    EmptyFamily,
    #[error("records are missing anchor scores")]
    MissingAnchor,
    #[error("both test forms must be represented")]
    MissingForm,
    #[error("singular information matrix in logistic fit")]
    SingularDesign,
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
