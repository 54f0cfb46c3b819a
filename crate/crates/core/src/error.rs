use std::path::PathBuf;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: PathBuf, reason: String },

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("no lexicon word has a feasible alignment over {frames} frames")]
    NoFeasibleWord { frames: usize },

    #[error("character {0:?} is not in the alphabet")]
    UnknownCharacter(String),

    #[error("missing posteriorgram for word {word:?} from classifier {classifier}")]
    MissingPosteriorgram { word: String, classifier: usize },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("no reference transcript for word {0:?}")]
    MissingReference(String),

    #[error("classifier outputs cover different word sets")]
    WordSetMismatch,

    #[error("calibration target unreachable: {0}")]
    TargetUnreachable(String),

    #[error("pruning removed every classifier")]
    EmptyResult,

    #[error("report audit failed: {0}")]
    AuditMismatch(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn malformed(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::MalformedFile {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
