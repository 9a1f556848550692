use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid functions live on different grids")]
    GridMismatch,
    #[error("non-finite value at grid index {index}: {context}")]
    NonFiniteResult { index: usize, context: String },
    #[error("ball has no grid points inside the truncation box (center {center:?}, radius {radius})")]
    DegenerateBall { center: Vec<f64>, radius: f64 },
    #[error("invalid exponent configuration: {0}")]
    InvalidExponents(String),
    #[error("weight {index} is not strictly positive (min {min})")]
    NonPositiveWeight { index: usize, min: f64 },
    #[error("cube family is empty")]
    EmptyFamily,
    #[error("kernel is singular: all points coincide with the evaluation point")]
    SingularPoint,
    #[error("slot index {index} out of range for arity {arity}")]
    IndexOutOfRange { index: usize, arity: usize },
    #[error("bump separation {separation} is below 4r = {min}")]
    SeparationTooSmall { separation: f64, min: f64 },
    #[error("two-bump input does not have zero mean (integral {integral}, L1 {l1})")]
    MeanNotZero { integral: f64, l1: f64 },
    #[error("bump {bump} has mass {leaked} outside its ball")]
    SupportViolation { bump: usize, leaked: f64 },
    #[error("no scales given")]
    EmptyScales,
    #[error("invalid scales: {0}")]
    InvalidScales(String),
    #[error("bump {slot} at {center:?} (radius {radius}) leaves the truncation box")]
    BumpOutsideBox { slot: usize, center: Vec<f64>, radius: f64 },
    #[error("quadrature normalizer {value} is below 1e-14")]
    NormalizerTooSmall { value: f64 },
    #[error("round {round} error {current} exceeds previous round error {previous}")]
    DivergingRounds { round: usize, previous: f64, current: f64 },
    #[error("zero denominator in operator-norm ratio for ensemble member {0}")]
    ZeroDenominator(usize),
    #[error("invalid atom: {0}")]
    InvalidAtom(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical breakdowns, as opposed to invalid input or I/O failures.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DivergingRounds { .. }
                | Error::NormalizerTooSmall { .. }
                | Error::NonFiniteResult { .. }
                | Error::SingularPoint
                | Error::ZeroDenominator(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
