use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("frame {index} missing: {path}")]
    MissingFrame { index: usize, path: PathBuf },

    #[error("format error: {0}")]
    Format(String),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("validation error at row {row}: {msg}")]
    Validation { row: usize, msg: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape error in layer `{layer}`: {msg}")]
    Shape { layer: String, msg: String },

    #[error("weight error in layer `{layer}`: {msg}")]
    Weights { layer: String, msg: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(layer: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Shape {
            layer: layer.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn weights(layer: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Weights {
            layer: layer.into(),
            msg: msg.into(),
        }
    }

    /// True for errors caused by bad user input (files, flags, config),
    /// as opposed to failures inside the pipeline itself.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Contract(_) | Error::Shape { .. })
    }
}
