use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("audio is sampled at {found} Hz but the feature configuration expects {expected} Hz; resample the input first")]
    SampleRate { expected: u32, found: u32 },

    #[error("frame index {index} out of range for {len} frames")]
    FrameIndex { index: usize, len: usize },

    #[error("invalid key {0}: keys are 0..=87 (MIDI pitch 21..=108)")]
    InvalidKey(i64),

    #[error("invalid note: {0}")]
    InvalidNote(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("shape mismatch at layer {layer} ({kind}): {detail}")]
    LayerShape {
        layer: usize,
        kind: &'static str,
        detail: String,
    },

    #[error("non-finite loss at batch index {batch}")]
    NonFiniteLoss { batch: usize },

    #[error("parse error at byte offset {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(offset: impl TryInto<u64>, message: impl Into<String>) -> Self {
        Error::Parse {
            offset: offset.try_into().unwrap_or(u64::MAX),
            message: message.into(),
        }
    }

    pub(crate) fn config(message: impl Into<String>) -> Self {
        Error::Config(message.into())
    }

    pub(crate) fn dimension(message: impl Into<String>) -> Self {
        Error::Dimension(message.into())
    }

    /// Attach the path of the file being processed.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}
