use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("empty input to {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("token id {id} out of range (limit {limit})")]
    TokenOutOfRange { id: usize, limit: usize },

    #[error("{frames} frames cannot carry this target, at least {required} are needed")]
    SequenceTooShort { frames: usize, required: usize },

    #[error("degenerate utterance: word {word:?} has {pieces} pieces but only {frames} frames")]
    DegenerateUtterance {
        word: String,
        pieces: usize,
        frames: usize,
    },

    #[error("frame alignment does not match transcript: {0}")]
    AlignmentMismatch(String),

    #[error("hypothesis does not match reference transcript")]
    TranscriptMismatch,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
