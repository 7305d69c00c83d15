use thiserror::Error;

use crate::config::ConfigViolation;
use crate::nehari::NehariError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem parameters: {0}")]
    InvalidParams(String),

    #[error("annulus {index} is degenerate (gap {gap:e})")]
    DegenerateAnnulus { index: usize, gap: f64 },

    #[error("structural mismatch: {0}")]
    Structure(String),

    #[error(transparent)]
    Nehari(#[from] NehariError),

    #[error("{what} did not converge within {iterations} iterations (last value {last_value:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        last_value: f64,
    },

    #[error(
        "potential derivative V'(r) is unavailable; rerun with a constant or tabulated potential"
    )]
    MissingDerivative,

    #[error("outer search failed: {0}")]
    OuterFailure(String),

    #[error("oracle unavailable: {0}")]
    Oracle(String),

    #[error("invalid configuration:\n  {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n  "))]
    Config(Vec<ConfigViolation>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("output directory {} exists; pass --force to replace it", .0.display())]
    OutputExists(std::path::PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
