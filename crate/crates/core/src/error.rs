use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("size mismatch in {what}: expected {expected}, got {actual}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{what} index {index} out of range (limit {limit})")]
    Range {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure in {block}: {detail}")]
    Numerical { block: String, detail: String },

    #[error("event at t={time} precedes previous event at t={previous}")]
    Ordering { time: f64, previous: f64 },

    #[error("unsupported MIDI status byte 0x{0:02X}")]
    UnsupportedMidi(u8),

    #[error("MIDI framing error: need 3 bytes, got {0}")]
    MidiFraming(usize),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("unsupported audio format in {path}: {detail}")]
    AudioFormat { path: PathBuf, detail: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {detail}")]
    Parse { what: String, detail: String },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(what: impl Into<String>, detail: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            detail: detail.to_string(),
        }
    }

    pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::SizeMismatch {
                what,
                expected,
                actual,
            })
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 0 is success; configuration problems map to 2, numerical failures
    /// to 3 and anything touching files or sockets to 4.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::SizeMismatch { .. }
            | Error::Range { .. }
            | Error::Ordering { .. }
            | Error::Parse { .. } => 2,
            Error::Numerical { .. } => 3,
            Error::Io { .. }
            | Error::AudioFormat { .. }
            | Error::UnsupportedMidi(_)
            | Error::MidiFraming(_)
            | Error::Protocol(_) => 4,
        }
    }
}
