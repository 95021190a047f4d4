use boapta_circuit::{CircuitError, ParseError};
use boapta_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Parse { path: String, source: ParseError },
    #[error("{circuit}: {source}")]
    Circuit { circuit: String, source: CircuitError },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    /// 2 for anything the user can fix in the invocation or its inputs, 1 for
    /// numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) | Self::Parse { .. } | Self::Circuit { .. } => 2,
            Self::Core(e) => match e {
                CoreError::Config(_)
                | CoreError::Param(_)
                | CoreError::Parse(_)
                | CoreError::Circuit(_)
                | CoreError::Io { .. }
                | CoreError::Format { .. }
                | CoreError::DisjointCircuits(_) => 2,
                _ => 1,
            },
        }
    }
}
