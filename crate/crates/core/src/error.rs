//! Error types shared by every pipeline stage.

use std::path::PathBuf;

use thiserror::Error;

use crate::llm::LlmError;

/// Result alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Exit-code families reported by the command-line driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFamily {
    Config = 1,
    Io = 2,
    Llm = 3,
    State = 4,
    Validation = 5,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("corpus generation spec error: {0}")]
    Spec(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("input is not valid UTF-8: {0}")]
    Encoding(String),

    #[error("malformed input at line {line}: {message}")]
    MalformedInput { line: usize, message: String },

    #[error("gold span mismatch in {doc_id} turn {turn} [{start},{end}): expected {expected:?}, document has {found:?}")]
    SpanMismatch {
        doc_id: String,
        turn: usize,
        start: usize,
        end: usize,
        expected: String,
        found: String,
    },

    #[error("overlapping spans in {doc_id} turn {turn}: [{a_start},{a_end}) and [{b_start},{b_end})")]
    Overlap {
        doc_id: String,
        turn: usize,
        a_start: usize,
        a_end: usize,
        b_start: usize,
        b_end: usize,
    },

    #[error("unknown subtype {0:?}")]
    UnknownSubtype(String),

    #[error("detection {0} has no risk class")]
    UnclassifiedDetection(String),

    #[error("unknown token {0:?}")]
    UnknownToken(String),

    #[error("cannot parse {0:?} as a date")]
    UnparseableDate(String),

    #[error("cannot parse {0:?} as a number")]
    UnparseableNumber(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("corpora are not aligned by doc_id: {0}")]
    MisalignedCorpora(String),

    #[error("no gold annotations available")]
    MissingGold,

    #[error(transparent)]
    Llm(#[from] LlmError),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("wrong state: expected {expected}, project is {actual}")]
    WrongState { expected: String, actual: String },

    #[error("{} detections have no verdict: {}", .0.len(), .0.join(", "))]
    UnreviewedDetections(Vec<String>),

    #[error("corrupt project: {0}")]
    CorruptProject(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn family(&self) -> ErrorFamily {
        match self {
            Error::Config(_) | Error::Spec(_) => ErrorFamily::Config,
            Error::Io { .. } => ErrorFamily::Io,
            Error::Llm(_) => ErrorFamily::Llm,
            Error::NotFound(_)
            | Error::WrongState { .. }
            | Error::UnreviewedDetections(_)
            | Error::CorruptProject(_) => ErrorFamily::State,
            _ => ErrorFamily::Validation,
        }
    }

    /// Process exit code for the command-line driver.
    pub fn exit_code(&self) -> i32 {
        self.family() as i32
    }
}
