//! Scenario configuration, experiment runners and report writing behind the
//! `neass-lab` command-line tool.

pub mod config;
pub mod experiments;
pub mod output;
pub mod scenario;

use neass_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("i/o: {0}")]
    Io(String),
}

impl LabError {
    /// Process exit code: 1 for a numerical target that was not reached,
    /// 2 for anything wrong with the input.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Core(Error::Convergence(_)) => 1,
            _ => 2,
        }
    }
}

impl From<LabError> for Error {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Core(e) => e,
            other => Error::Domain(other.to_string()),
        }
    }
}
