use thiserror::Error;

/// Errors produced by the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed trace: {0}")]
    TraceFormat(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("internal consistency violation: {0}")]
    Consistency(String),

    #[error("capacity: {0}")]
    Capacity(String),

    /// The allocator could not place the requested blocks.
    #[error("no space left on device: needed {needed} blocks, {free} free")]
    NoSpace { needed: u64, free: u64 },

    #[error("invalid operation: {0}")]
    InvalidOp(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn is_no_space(&self) -> bool {
        matches!(self, Error::NoSpace { .. })
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
