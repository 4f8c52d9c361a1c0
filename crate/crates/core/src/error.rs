//! Error taxonomy shared by every module. Callers map these onto process
//! exit codes; the split mirrors how failures should be handled rather than
//! where they originate.

use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Invalid configuration or wiring: bad dimensions, unknown variants,
    /// mismatched architectures. Fail fast before any training step runs.
    Config(String),
    /// A call broke an operation's precondition (k too large, batch too
    /// small, malformed one-hot, ...). Indicates a caller bug.
    Contract(String),
    /// Numerical failure mid-run: non-finite loss, gradient, or target.
    /// Carries the environment-step index where training aborted.
    Training { step: u64, what: String },
    /// A sampler or consumer was asked for data that does not exist yet
    /// (for example an n-step batch from a near-empty replay buffer).
    NotReady,
    /// A persisted artifact failed validation (checksum, magic, layout).
    Corrupt(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Training { step, what } => {
                write!(f, "training aborted at env step {step}: {what}")
            }
            Error::NotReady => write!(f, "not ready: insufficient data"),
            Error::Corrupt(msg) => write!(f, "corrupt artifact: {msg}"),
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
