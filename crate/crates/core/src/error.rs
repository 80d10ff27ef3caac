use std::io;

/// Errors produced by the simulator library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),
    #[error("zero loss gradient at the eavesdropper observation")]
    ZeroGradient,
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("malformed artifact: {0}")]
    Format(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
