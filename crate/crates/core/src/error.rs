use thiserror::Error;

/// Errors raised by the fusion engine and its supporting modules.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed serialized input. `record` is the zero-based record index
    /// (JSONL line or array element) and `field` the offending field path.
    #[error("parse error in record {record}, field `{field}`: {message}")]
    Parse {
        record: usize,
        field: String,
        message: String,
    },

    /// A value violates one of its type invariants.
    #[error("invalid {what}: {message}")]
    Invalid { what: &'static str, message: String },

    /// A ratio or estimate is undefined on the given input.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("duplicate evidence for candidate {candidate} in frame {frame}")]
    DuplicateEvidence { candidate: u64, frame: u64 },

    #[error("frame {got} arrived after frame {last}; frames must be strictly increasing")]
    OutOfOrder { last: u64, got: u64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("unknown recipe or category: {0}")]
    Recipe(String),

    #[error("config error: {0}")]
    Config(String),

    /// A structural invariant of the produced graph does not hold.
    #[error("graph invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(what: &'static str, message: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            message: message.into(),
        }
    }
}
