use std::io;

use stip_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
    #[error("stale epoch: message carries {got}, session is at {current}")]
    StaleEpoch { got: u64, current: u64 },
    #[error("{0} is not initialized")]
    NotInitialized(&'static str),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("remote error {code}: {detail}")]
    Remote { code: u16, detail: String },
    #[error("transport closed")]
    Closed,
    #[error("generation aborted after {} tokens: {source}", tokens.len())]
    Aborted {
        tokens: Vec<usize>,
        #[source]
        source: Box<Error>,
    },
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format { what, detail: detail.into() }
    }

    /// Process exit code: 2 usage, 3 I/O, 4 protocol.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Core(_) => 2,
            Error::Io(_) | Error::Format { .. } => 3,
            Error::StaleEpoch { .. }
            | Error::NotInitialized(_)
            | Error::Protocol(_)
            | Error::Remote { .. }
            | Error::Closed
            | Error::Aborted { .. } => 4,
        }
    }
}
