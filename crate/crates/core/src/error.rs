use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed variable name {0:?}")]
    MalformedVariable(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("trace error: {0}")]
    Trace(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("events out of order at index {0}")]
    Order(usize),

    #[error("occurrences with fewer than {needed} alarms: {}", .occurrences.join(", "))]
    InsufficientAlarms {
        occurrences: Vec<String>,
        needed: usize,
    },

    #[error("vocabulary error: {0}")]
    Vocab(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("out-of-vocabulary token {0:?}")]
    Oov(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite loss on sample {sample}")]
    Numeric { sample: usize },

    #[error("load error: {0}")]
    Load(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Split(_) | Error::Shape(_) => ErrorKind::Config,
            Error::Numeric { .. } | Error::Training(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }
}
