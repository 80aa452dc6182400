//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("point ({x}, {y}, {z}) is outside the field domain")]
    OutsideDomain { x: f64, y: f64, z: f64 },

    #[error("singular axis: {0}")]
    SingularAxis(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// `tau >= 1` somewhere on the stencil; `sqrt(1 - tau)` leaves the reals.
    #[error("fire-hose regime: tau = {tau} >= 1 at ({x}, {y}, {z})")]
    FireHoseRegime { tau: f64, x: f64, y: f64, z: f64 },

    #[error("degenerate transform: {0}")]
    DegenerateTransform(String),

    #[error("degenerate normalization: {0}")]
    DegenerateNormalization(String),

    #[error("root search failed: {0}")]
    RootSearch(String),

    #[error("mirror criterion undefined: p_parallel = 0 at ({x}, {y}, {z})")]
    UndefinedCriterion { x: f64, y: f64, z: f64 },

    #[error("solver did not converge after {iterations} iterations (last update {last_update:e})")]
    NonConvergence {
        iterations: usize,
        last_update: f64,
        /// Max-update norm per iteration, for divergence diagnostics.
        history: Vec<f64>,
    },

    #[error("invalid surface label: {0}")]
    InvalidLabel(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
