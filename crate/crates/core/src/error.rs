use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed record in a line-oriented input file.
    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate qid {qid:?} on lines {first} and {second}")]
    DuplicateQid {
        qid: String,
        first: usize,
        second: usize,
    },

    #[error("invalid instance {qid:?}: {message}")]
    InvalidInstance { qid: String, message: String },

    #[error("unknown image id {0:?}")]
    UnknownImageId(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("ontology: {0}")]
    Ontology(String),

    #[error("unknown ontology type {0:?}")]
    UnknownType(String),

    #[error("lexicon: {0}")]
    Lexicon(String),

    #[error("question has no tokens")]
    EmptyQuestion,

    #[error("unsupported speech act (first token {0:?})")]
    UnsupportedSpeechAct(String),

    #[error("question has no content word")]
    NoContent,

    #[error("question could not be parsed: {0}")]
    Unparseable(String),

    #[error("qid mismatch: {0:?} vs {1:?}")]
    QidMismatch(String, String),

    #[error("no candidates to choose from")]
    NoCandidates,

    #[error("instances lack a multiple-choice list: {0:?}")]
    MissingChoices(Vec<String>),

    #[error("empty batch")]
    EmptyBatch,

    #[error("no trainable rows")]
    NoTrainableRows,

    #[error("empty evaluation set")]
    EmptyEvaluation,

    #[error("model: {0}")]
    Model(String),

    #[error("cache file: {0}")]
    Cache(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing resource: {0}")]
    MissingResource(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn record(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Record {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
