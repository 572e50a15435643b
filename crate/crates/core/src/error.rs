//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
///
/// The variants map onto the CLI exit codes: `Input` → 1, `Numerical` → 2,
/// `Guard` → 3. `State` marks API misuse (e.g. asking for a gradient before
/// the partial-likelihood pass) and is treated as an input error at the CLI
/// boundary.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user input: malformed files, inconsistent dimensions,
    /// non-finite parameters, out-of-range values.
    #[error("input error: {0}")]
    Input(String),

    /// Numerical failure: degenerate generators, Cholesky breakdown after
    /// jitter escalation, transition probabilities outside tolerance.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Refusal to run an instance that exceeds a configured guard
    /// (e.g. brute-force enumeration too large, exact gradient for large S).
    #[error("guard refusal: {0}")]
    Guard(String),

    /// Operation invoked in the wrong order (missing caches or partials).
    #[error("state error: {0}")]
    State(String),

    /// I/O failure, annotated with the path involved.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn guard(msg: impl Into<String>) -> Self {
        Error::Guard(msg.into())
    }

    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
