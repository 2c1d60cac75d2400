//! Failure classes of the runner, each mapped to a stable process exit code.

use thiserror::Error;

/// What went wrong, sorted by blame: the config file, the computation, or
/// the filesystem.
#[derive(Debug, Error)]
pub enum CliError {
    /// The config file is malformed, has unknown keys, or describes an
    /// inconsistent experiment.
    #[error("config schema: {0}")]
    Schema(String),
    /// The experiment itself failed after a valid config was accepted.
    #[error("computation: {0}")]
    Compute(String),
    /// Reading the config or writing artifacts failed.
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    /// Stable exit code of the failure class. `0` (all verdicts pass) and
    /// `1` (a verdict failed) are reserved for completed runs.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Compute(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<qmlab_core::QmError> for CliError {
    fn from(err: qmlab_core::QmError) -> Self {
        CliError::Compute(err.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Io(err.to_string())
    }
}
