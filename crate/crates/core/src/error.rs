use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration value failed validation; `key` names the offending field.
    #[error("invalid value for `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("image error: {0}")]
    Image(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, found: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            found,
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by user-supplied values rather than runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::Parse { .. } | Error::InvalidInput(_) | Error::Dimension { .. }
        )
    }
}
