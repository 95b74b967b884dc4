//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("mesh: {0}")]
    Mesh(String),
    #[error("nonlinearity: {0}")]
    Nonlinearity(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("solver: {0}")]
    Solver(String),
    #[error(
        "solver did not converge after {iterations} iterations (optimality {optimality:e})"
    )]
    SolverNonConvergence { iterations: usize, optimality: f64 },
    #[error("rearrangement: {0}")]
    Rearrange(String),
    #[error("radial: {0}")]
    Radial(String),
    #[error("deficit: {0}")]
    Deficit(String),
    #[error("config: {0}")]
    Config(String),
    #[error("format: {0}")]
    Format(String),
    #[error("case {case}: {source}")]
    Case {
        case: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn in_case(self, case: &str) -> Error {
        Error::Case {
            case: case.to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
