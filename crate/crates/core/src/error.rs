use thiserror::Error;

/// Errors raised by the estimation library.
///
/// Every variant carries a stable machine-readable code (see [`Error::code`])
/// and belongs to one of two classes: problems with the caller's input and
/// failures of a numerical procedure on otherwise valid input.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("length mismatch: {what} has {found} entries, expected {expected}")]
    MismatchedLength {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("row {row}: omega_hat = {value} is below 1")]
    OmegaBelowOne { row: usize, value: f64 },
    #[error("row {row}: {field} = {value} exceeds the configured bound {bound}")]
    OutOfBounds {
        row: usize,
        field: &'static str,
        value: f64,
        bound: f64,
    },
    #[error("no treated observations (a = 1)")]
    NoTreated,
    #[error("row {row}: non-finite value in {field}")]
    NonfiniteValue { row: usize, field: &'static str },
    #[error("row {row}: treatment must be 0 or 1, got {value}")]
    InvalidTreatment { row: usize, value: f64 },
    #[error("need at least {needed} observations, got {found}")]
    TooFewObservations { needed: usize, found: usize },
    #[error("row {row}: covariate dimension {found}, expected {expected}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("fold count {k} out of range for n = {n} (need 2 <= K <= n)")]
    KOutOfRange { k: usize, n: usize },
    #[error("logistic fit failed: {0}")]
    SeparationOrSingular(String),
    #[error("all labels belong to one class")]
    OneClass,
    #[error("least-squares design matrix is singular")]
    SingularDesign,
    #[error("every kernel normalizer is zero; bandwidth h = {h} is too small")]
    AllQhatZero { h: f64 },
    #[error("need at least 2 treated observations for bandwidth selection, got {found}")]
    TooFewTreated { found: usize },
    #[error("invalid bandwidth {0}")]
    InvalidBandwidth(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("cannot place {k} cubes in dimension {d}")]
    KTooLarge { k: usize, d: usize },
    #[error("fluctuation violates positivity: {0}")]
    InvalidDensity(String),
    #[error("construction requires eps <= delta, got eps = {eps}, delta = {delta}")]
    EpsGtDelta { eps: f64, delta: f64 },
    #[error("moment does not change sign on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("moment does not depend on theta")]
    DegenerateMoment,
    #[error("root finder did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Whether an error stems from bad input or from a failed computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Computation,
}

impl Error {
    /// Stable upper-case code, used in CLI messages and JSON output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MismatchedLength { .. } => "MISMATCHED_LENGTH",
            Error::OmegaBelowOne { .. } => "OMEGA_BELOW_ONE",
            Error::OutOfBounds { .. } => "OUT_OF_BOUNDS",
            Error::NoTreated => "NO_TREATED",
            Error::NonfiniteValue { .. } => "NONFINITE_VALUE",
            Error::InvalidTreatment { .. } => "INVALID_TREATMENT",
            Error::TooFewObservations { .. } => "TOO_FEW_OBSERVATIONS",
            Error::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
            Error::KOutOfRange { .. } => "K_OUT_OF_RANGE",
            Error::SeparationOrSingular(_) => "SEPARATION_OR_SINGULAR",
            Error::OneClass => "ONE_CLASS",
            Error::SingularDesign => "SINGULAR_DESIGN",
            Error::AllQhatZero { .. } => "ALL_QHAT_ZERO",
            Error::TooFewTreated { .. } => "TOO_FEW_TREATED",
            Error::InvalidBandwidth(_) => "INVALID_BANDWIDTH",
            Error::InvalidArgument(_) => "INVALID_ARGUMENT",
            Error::KTooLarge { .. } => "K_TOO_LARGE",
            Error::InvalidDensity(_) => "INVALID_DENSITY",
            Error::EpsGtDelta { .. } => "EPS_GT_DELTA",
            Error::NoSignChange { .. } => "NO_SIGN_CHANGE",
            Error::DegenerateMoment => "DEGENERATE_MOMENT",
            Error::NoConvergence { .. } => "NO_CONVERGENCE",
            Error::Parse { .. } => "PARSE_ERROR",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::MismatchedLength { .. }
            | Error::OmegaBelowOne { .. }
            | Error::OutOfBounds { .. }
            | Error::NoTreated
            | Error::NonfiniteValue { .. }
            | Error::InvalidTreatment { .. }
            | Error::TooFewObservations { .. }
            | Error::DimensionMismatch { .. }
            | Error::KOutOfRange { .. }
            | Error::InvalidBandwidth(_)
            | Error::InvalidArgument(_)
            | Error::KTooLarge { .. }
            | Error::EpsGtDelta { .. }
            | Error::Parse { .. } => ErrorClass::Input,
            Error::SeparationOrSingular(_)
            | Error::OneClass
            | Error::SingularDesign
            | Error::AllQhatZero { .. }
            | Error::TooFewTreated { .. }
            | Error::InvalidDensity(_)
            | Error::NoSignChange { .. }
            | Error::DegenerateMoment
            | Error::NoConvergence { .. } => ErrorClass::Computation,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
