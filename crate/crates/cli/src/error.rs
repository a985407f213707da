//! CLI errors mapped onto the documented exit codes: 1 usage, 2 validation
//! failure, 3 runtime invariant violation.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation failure: {0}")]
    Validation(String),

    #[error("runtime invariant violation: {0}")]
    Runtime(String),

    #[error(transparent)]
    Core(#[from] fpgraph_core::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Exit code per the documented contract.
    pub fn exit_code(&self) -> i32 {
        use fpgraph_core::Error as E;
        match self {
            CliError::Parse(_) | CliError::Validation(_) | CliError::Io(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Core(core) => match core {
                E::SolverFailure { .. } | E::ContinuityViolation { .. } => 3,
                E::Io(_) => 2,
                _ => 2,
            },
        }
    }
}
