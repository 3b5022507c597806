use std::path::PathBuf;

/// Errors produced anywhere in the codec.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("decode error in frame {frame}: {source}")]
    FrameDecode {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged at step {step}: {message}")]
    NonFinite { step: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps a stream error with the index of the frame being decoded.
    pub fn in_frame(self, frame: usize) -> Self {
        match self {
            e @ Error::FrameDecode { .. } => e,
            e => Error::FrameDecode {
                frame,
                source: Box::new(e),
            },
        }
    }

    /// True for errors caused by malformed or inconsistent input streams.
    pub fn is_decode(&self) -> bool {
        matches!(self, Error::Decode(_) | Error::FrameDecode { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidArgument(format!($($arg)*))
    };
}

macro_rules! config_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Config(format!($($arg)*))
    };
}

macro_rules! data_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Data(format!($($arg)*))
    };
}

macro_rules! decode_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Decode(format!($($arg)*))
    };
}

pub(crate) use {config_err, data_err, decode_err, invalid};
