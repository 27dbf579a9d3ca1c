use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix is singular: {0}")]
    Singular(&'static str),
    #[error("matrix has deficient column rank")]
    RankDeficient,
    #[error("no stabilizing Riccati solution: pair (A, B) is not stabilizable")]
    NonStabilizable,
    #[error("{0} did not converge within its iteration budget")]
    NoConvergence(&'static str),
    #[error("matrix exponential overflowed")]
    Overflow,
    #[error("history lookup at t = {t} outside retained range [{oldest}, {newest}]")]
    OutOfRange { t: f64, oldest: f64, newest: f64 },
    #[error("invalid saturation bounds: lo = {lo} > hi = {hi}")]
    InvalidBounds { lo: f64, hi: f64 },
    #[error("trigger check at t = {t} is not a multiple of the check period {period}")]
    NotOnGrid { t: f64, period: f64 },
    #[error("(A, B) is not controllable")]
    NotControllable,
    #[error("(A, C) is not observable")]
    NotObservable,
    #[error("only single-output plants are supported here (p = {0})")]
    UnsupportedMultiOutput(usize),
    #[error("simulation diverged at t = {t} s")]
    Diverged { t: f64 },
    #[error("empty metrics window [{start}, {end}]")]
    EmptyWindow { start: f64, end: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn dim_err(context: &'static str, expected: impl ToString, actual: impl ToString) -> Error {
    Error::DimensionMismatch {
        context,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
