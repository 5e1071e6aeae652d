//! Error type shared by the whole crate.

use alloc::string::String;
use core::fmt;

/// What went wrong, coarse enough for a driver to map to an exit status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ErrorKind {
    /// Invalid argument or inconsistent configuration (caller error).
    Config,
    /// A function was evaluated outside its mathematical domain.
    Domain,
    /// A structural invariant of a computed field failed (e.g. a split wet
    /// block in a column during interface extraction).
    Invariant,
    /// An iteration failed to converge within its budget.
    NonConvergence,
}

/// Crate-wide error: a kind plus a human-readable message.
#[derive(Debug, Clone, PartialEq)]
pub struct Error {
    kind: ErrorKind,
    msg: String,
}

impl Error {
    pub fn new(kind: ErrorKind, msg: impl Into<String>) -> Self {
        Self { kind, msg: msg.into() }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self::new(ErrorKind::Config, msg)
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Self::new(ErrorKind::Domain, msg)
    }

    pub fn invariant(msg: impl Into<String>) -> Self {
        Self::new(ErrorKind::Invariant, msg)
    }

    pub fn non_convergence(msg: impl Into<String>) -> Self {
        Self::new(ErrorKind::NonConvergence, msg)
    }

    pub fn kind(&self) -> &ErrorKind {
        &self.kind
    }

    pub fn message(&self) -> &str {
        &self.msg
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = match self.kind {
            ErrorKind::Config => "config",
            ErrorKind::Domain => "domain",
            ErrorKind::Invariant => "invariant",
            ErrorKind::NonConvergence => "non-convergence",
        };
        write!(f, "{label}: {}", self.msg)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
