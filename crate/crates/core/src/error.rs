//! Error type shared by the whole crate.

use std::fmt;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by tensor ops, layers, networks, data loading and training.
#[derive(Debug)]
pub enum Error {
    /// Tensor or layer shape disagreement. Carries a human-readable description
    /// of the expected vs. observed shapes.
    Shape(String),
    /// An argument outside its documented domain (probability not in [0,1],
    /// axis out of range, ...).
    InvalidArg(String),
    /// Bad experiment or network configuration.
    Config(String),
    /// Malformed input data; message names the offending row where applicable.
    Data(String),
    /// A NaN or infinity appeared where the library guarantees finite values.
    NonFinite(String),
    /// Checkpoint or config document could not be parsed.
    Parse(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            Error::InvalidArg(msg) => write!(f, "invalid argument: {msg}"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Data(msg) => write!(f, "bad data: {msg}"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
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

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse(err.to_string())
    }
}
