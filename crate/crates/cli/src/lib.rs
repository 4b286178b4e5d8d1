//! IO and orchestration around `eebench-core`: the on-disk dataset layout,
//! weight checkpoints, CSV/JSON reports, SVG plots, and the experiment
//! commands behind the `eebench` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset_io;
pub mod plot;
pub mod reference;
pub mod report;

/// Errors that should surface as usage problems (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "usage error: {}", self.0)
    }
}

impl std::error::Error for UsageError {}

/// Command outcome; partial failures keep their outputs but exit nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Partial,
}
