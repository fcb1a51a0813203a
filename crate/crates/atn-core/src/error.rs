use std::fmt;

/// Crate-wide error type.
///
/// `Config` marks a bad configuration value or an inconsistent layer wiring
/// (caller gave us something that can never work). `Usage` marks a call that
/// violates an operation's contract at runtime (e.g. backward before
/// forward). `NonFinite` is the hard error raised whenever a NaN or Inf
/// shows up in a value or gradient buffer.
#[derive(Debug)]
pub enum Error {
    Config(String),
    Usage(String),
    NonFinite(String),
    Format(String),
    Io(std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Usage(msg) => write!(f, "usage error: {msg}"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Io(err) => write!(f, "io error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}

/// Shorthand for `Error::Config` with format args.
#[macro_export]
macro_rules! config_err {
    ($($arg:tt)*) => { $crate::error::Error::Config(format!($($arg)*)) };
}

/// Shorthand for `Error::Usage` with format args.
#[macro_export]
macro_rules! usage_err {
    ($($arg:tt)*) => { $crate::error::Error::Usage(format!($($arg)*)) };
}
