use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("state space of {states} states exceeds the cap of {cap}")]
    Size { states: u128, cap: usize },
    #[error("cannot parse {what}: {detail}")]
    Parse { what: String, detail: String },
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] risk_sharing::Error),
}

pub type Result<T> = std::result::Result<T, IoError>;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const RESIDUALS: u8 = 2;
    pub const VALIDATION: u8 = 3;
    pub const SOLVER: u8 = 4;
}

impl IoError {
    pub fn validation(msg: impl Into<String>) -> Self {
        IoError::Validation(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            IoError::Core(risk_sharing::Error::Solver { .. } | risk_sharing::Error::NashNotConverged { .. }) => {
                exit::SOLVER
            }
            _ => exit::VALIDATION,
        }
    }
}
