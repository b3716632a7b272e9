use thiserror::Error;

/// Every failure the library reports. Instability is not an error: a diverging
/// simulation returns a flagged trajectory instead.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("model invalid: {0}")]
    InvalidModel(String),
    #[error("riccati iteration did not converge after {iterations} iterations (pair not stabilizable?)")]
    NonStabilizable { iterations: usize },
    #[error("index range: s = {s} > t = {t}")]
    IndexRange { s: usize, t: usize },
    #[error("insufficient history: need at least 2 observed states, have {have}")]
    InsufficientHistory { have: usize },
    #[error("confidence trace requested before any simulation step")]
    NotRun,
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("input matrix B is singular")]
    SingularB,
    #[error("degenerate trajectory: {0}")]
    Degenerate(String),
    #[error("optimal cost {0:e} is too small for a ratio")]
    DegenerateOpt(f64),
    #[error("precondition violated: {}", .0.join("; "))]
    PreconditionViolated(Vec<String>),
    #[error("sessions {first} and {second} overlap on station {station}")]
    SessionConflict { station: usize, first: usize, second: usize },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
