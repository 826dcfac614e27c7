use thiserror::Error;

/// Errors raised by the selection library and the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller-supplied data or parameters violate a precondition.
    #[error("invalid input: {0}")]
    Input(String),
    /// A value left the domain where an operation is defined (e.g. log of zero).
    #[error("numeric domain error: {0}")]
    Numeric(String),
    /// Exhaustive enumeration would exceed the configured cap.
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    /// A file did not match its expected layout.
    #[error("format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::Numeric(_) => "numeric",
            Error::Capacity(_) => "capacity",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
