//! Error type shared across the core crate.

use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Invalid numeric input (negative rate, non-positive mass, empty series).
    Domain(String),
    /// Input violates the recording protocol (segment too short, duplicate subject).
    Protocol(String),
    /// Raw recording cannot be turned into a valid `SubjectRecording`.
    Ingest(String),
    /// Signal selection does not resolve against the catalog.
    Selection(String),
    /// Channel sequences cannot be fused into one matrix.
    Fusion(String),
    /// Model family / shape combination cannot be constructed.
    Build(String),
    /// Call violates a shape or mode contract of an already-built object.
    Contract(String),
    /// Invalid experiment or training configuration.
    Config(String),
    /// Training produced a non-finite loss; payload carries diagnostics.
    NonFinite(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Domain(s) => write!(f, "domain error: {s}"),
            Self::Protocol(s) => write!(f, "protocol error: {s}"),
            Self::Ingest(s) => write!(f, "ingestion error: {s}"),
            Self::Selection(s) => write!(f, "selection error: {s}"),
            Self::Fusion(s) => write!(f, "fusion error: {s}"),
            Self::Build(s) => write!(f, "build error: {s}"),
            Self::Contract(s) => write!(f, "contract error: {s}"),
            Self::Config(s) => write!(f, "config error: {s}"),
            Self::NonFinite(s) => write!(f, "non-finite loss: {s}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
