use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty pool")]
    EmptyPool,
    #[error("scores required")]
    ScoresRequired,
    #[error("invalid alpha: {0}")]
    InvalidAlpha(f64),
    #[error("inconsistent M: expected {expected} verifications, found {found}")]
    InconsistentM { expected: usize, found: usize },
    #[error("no selectable answer in pool")]
    NoSelectableAnswer,
    #[error("no learnable signal")]
    NoLearnableSignal,
    #[error("invalid token count: {0}")]
    InvalidTokenCount(i64),
    #[error("invalid model config: {0}")]
    InvalidModelConfig(String),
    #[error("no measurement for {role} N={n} M={m}")]
    NoMeasurement { role: String, n: usize, m: usize },
    #[error("slate too large: N={n} exceeds pool of {pool} in problem {problem_id}")]
    SlateTooLarge {
        problem_id: String,
        n: usize,
        pool: usize,
    },
    #[error("labels required (problem {0})")]
    LabelsRequired(String),
    #[error("insufficient points: curve has {0}, need at least 2")]
    InsufficientPoints(usize),
    #[error("no problems")]
    NoProblems,
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("problem {problem_id}: {message}")]
    InvalidProblem { problem_id: String, message: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// `std::io::Error` is neither `Clone` nor `PartialEq`; keep only its rendering.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct IoError(pub String);

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(IoError(e.to_string()))
    }
}
