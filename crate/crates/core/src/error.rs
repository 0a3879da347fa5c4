use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("degenerate frame: {0}")]
    DegenerateFrame(String),
    #[error("channel state information is not available at the receiver")]
    CsiUnavailable,
    #[error("framing error: {0}")]
    Framing(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("schema version mismatch: {0}")]
    Version(String),
    #[error("bridge protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
