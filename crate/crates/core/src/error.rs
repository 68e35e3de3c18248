use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension must be at least 1, got {0}")]
    InvalidDimension(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("observation contains a non-finite entry at index {0}")]
    NonFiniteInput(usize),

    #[error("need at least {required} observations, got {actual}")]
    InsufficientSamples { required: usize, actual: usize },

    #[error("shrinkage coefficient {0} is outside [0, 1]")]
    LambdaOutOfRange(f64),

    /// The next shrinkage coefficient equals 1, so the rank-one coupling in the
    /// G-inverse update is undefined.
    #[error("shrinkage coefficient of the next step is 1; rank-one update is undefined")]
    DegenerateLambda,

    #[error("near-singular pivot {pivot:e} at column {column} of the inverse chain")]
    PivotBlowup { column: usize, pivot: f64 },

    #[error("non-finite denominator in rank-one inverse update")]
    NonFiniteDenominator,

    #[error("inverse state holds variant {actual}, step requires {expected}")]
    WrongVariant {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input")]
    EmptyInput,
}
