use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix is numerically singular ({0})")]
    Singular(&'static str),

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("duplicate identifier `{0}`")]
    DuplicateId(String),

    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("unknown language `{0}`")]
    UnknownLang(String),

    #[error("unknown cell ({task}, {lang})")]
    UnknownCell { task: String, lang: String },

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{0}: file is empty")]
    EmptyFile(PathBuf),

    #[error("{path}:{line}: label `{label}` is not in the supplied schema")]
    LabelNotInSchema {
        path: PathBuf,
        line: usize,
        label: String,
    },

    #[error("{path}:{line}: embedding width {got}, expected {expected}")]
    EmbeddingWidth {
        path: PathBuf,
        line: usize,
        expected: usize,
        got: usize,
    },

    #[error("no embedding for sentence {sentence} position {position}")]
    MissingEmbedding { sentence: usize, position: usize },

    #[error("partition constraint infeasible; violating cells: {}", .cells.join(", "))]
    Infeasible { cells: Vec<String> },

    #[error("cell has {0} sentences, at least 10 are needed for an 80/10/10 split")]
    TooFewSentences(usize),

    #[error("no training data in any seen cell")]
    EmptyTrainingData,

    #[error("non-finite loss {loss} at step {step} on cell ({task}, {lang})")]
    NonFiniteLoss {
        step: u64,
        task: String,
        lang: String,
        loss: f64,
    },

    #[error("zero variance in correlation input")]
    ZeroVariance,

    #[error("need at least 3 points for a correlation, got {0}")]
    TooFewPoints(usize),

    #[error("no seen source cell for task `{0}`")]
    NoSource(String),

    #[error("language `{0}` has no feature vector")]
    MissingFeatures(String),

    #[error("checkpoint entry `{entry}`: {msg}")]
    CheckpointEntry { entry: String, msg: String },

    #[error("checkpoint format: {0}")]
    CheckpointFormat(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
