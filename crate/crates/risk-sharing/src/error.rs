use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} states, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("solver failed in {stage}: {detail}")]
    Solver { stage: &'static str, detail: String },

    #[error("Nash search stopped at distance {best_distance:e} (target {target:e}) after {iterations} iterations")]
    NashNotConverged {
        best_z: Vec<f64>,
        best_distance: f64,
        target: f64,
        iterations: usize,
        trace: Vec<f64>,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn solver(stage: &'static str, detail: impl Into<String>) -> Self {
        Error::Solver {
            stage,
            detail: detail.into(),
        }
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}
