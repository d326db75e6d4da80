use std::io;
use std::path::PathBuf;

/// Everything the CLI can fail with. [`Error::exit_code`] maps each kind to
/// the process status.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] spikenm_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: malformed file: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("oracle checks failed: {0}")]
    Oracle(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const DIVERGENCE: i32 = 3;
    pub const INVARIANT: i32 = 4;
    pub const ORACLE: i32 = 5;
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format { path: path.into(), msg: msg.into() }
    }

    pub fn exit_code(&self) -> i32 {
        use spikenm_core::Error as C;
        match self {
            Error::Config(_) | Error::Core(C::Config(_)) => exit::CONFIG,
            Error::Core(C::Divergence(_)) => exit::DIVERGENCE,
            Error::Core(C::Invariant(_)) => exit::INVARIANT,
            Error::Oracle(_) => exit::ORACLE,
            _ => exit::FAILURE,
        }
    }
}
