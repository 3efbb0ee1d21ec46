use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the crate. Every variant carries the `module::operation`
/// that failed so that command-line callers can report it verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: {msg}")]
    InvalidInput { op: &'static str, msg: String },

    #[error("{op}: shape mismatch: {msg}")]
    Shape { op: &'static str, msg: String },

    #[error("{op}: {}: {source}", path.display())]
    Io {
        op: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{op}: {}: {msg}", path.display())]
    Format { op: &'static str, path: PathBuf, msg: String },

    #[error("{op}: class {class} is empty in the {side} mask; distance is undefined")]
    EmptyMask { op: &'static str, class: u8, side: &'static str },

    #[error("{op}: non-finite {component} loss ({value}) at epoch {epoch}, iteration {iteration}")]
    NonFinite { op: &'static str, component: &'static str, value: f64, epoch: usize, iteration: u64 },
}

impl Error {
    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidInput { op, msg: msg.into() }
    }

    pub(crate) fn shape(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Shape { op, msg: msg.into() }
    }

    pub(crate) fn io(op: &'static str, path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { op, path: path.into(), source }
    }

    pub(crate) fn format(op: &'static str, path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        Error::Format { op, path: path.into(), msg: msg.to_string() }
    }

    /// The `module::operation` tag of the failure.
    pub fn operation(&self) -> &'static str {
        match self {
            Error::InvalidInput { op, .. }
            | Error::Shape { op, .. }
            | Error::Io { op, .. }
            | Error::Format { op, .. }
            | Error::EmptyMask { op, .. }
            | Error::NonFinite { op, .. } => op,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
