use thiserror::Error;

/// Errors raised by the planner library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("terrain gradient vanishes at ({0}, {1})")]
    ZeroGradient(f64, f64),
    #[error("control matrix is rank deficient (rank {rank} < {expected})")]
    RankDeficient { rank: usize, expected: usize },
    #[error("frame [F_c | F] is singular")]
    SingularFrame,
    #[error("penalty matrix entry {index} is not positive ({value})")]
    SingularMetric { index: usize, value: f64 },
    #[error("schedule offset {offset} must satisfy |offset| < horizon {horizon}")]
    InvalidOffset { offset: f64, horizon: f64 },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("flow step diverged at s = {s} (ds = {ds})")]
    StepDiverged { s: f64, ds: f64 },
    #[error("{scheme} requires a state-independent frame")]
    UnsupportedSystem { scheme: String },
    #[error("unknown {kind} `{name}` (known: {known})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        known: String,
    },
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("trajectory schema mismatch: {0}")]
    Schema(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Schema(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
