use std::io;
use std::path::{Path, PathBuf};

/// Errors of the file layer and command-line front end.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad configuration, arguments or mismatched dimensions.
    #[error("{0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// A data file that does not follow its format.
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    /// Singular systems and non-finite values.
    #[error("{0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        Error::Format { path: path.to_path_buf(), message: message.into() }
    }

    /// Process exit status: 2 configuration or dimension, 3 I/O or file
    /// format, 4 numerical.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) => 2,
            Error::Io { .. } | Error::Format { .. } => 3,
            Error::Numerical(_) => 4,
        }
    }
}

impl From<neuroscore_core::Error> for Error {
    fn from(e: neuroscore_core::Error) -> Self {
        use neuroscore_core::Error as E;
        match e {
            E::Singular(_) | E::NonFinite(_) => Error::Numerical(e.to_string()),
            _ => Error::Config(e.to_string()),
        }
    }
}
