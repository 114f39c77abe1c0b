use alloc::string::String;
use core::fmt;

/// Errors shared across the crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A precondition on an argument or configuration failed.
    Validation(String),
    /// A byte stream did not match the expected container layout.
    Format(String),
    /// A record parsed but carried an impossible value.
    CorruptRecord { index: usize, label: u8 },
    /// Outcome enumeration was requested for a continuously stochastic kind.
    NotDiscrete(String),
    /// A numerical computation produced or received a non-finite value.
    Numerical(String),
    /// Training loss became non-finite at the given step.
    Diverged { step: usize },
    /// No checkpoint was recorded at the requested step.
    MissingCheckpoint { step: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Validation(msg) => write!(f, "validation error: {msg}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::CorruptRecord { index, label } => {
                write!(f, "corrupt record {index}: label byte {label} out of range 0-9")
            }
            Error::NotDiscrete(kind) => {
                write!(f, "transform {kind} is continuously stochastic; no exact outcome enumeration")
            }
            Error::Numerical(msg) => write!(f, "numerical error: {msg}"),
            Error::Diverged { step } => write!(f, "training diverged at step {step}"),
            Error::MissingCheckpoint { step } => write!(f, "no checkpoint recorded at step {step}"),
        }
    }
}

#[cfg(test)]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
