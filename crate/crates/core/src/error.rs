use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the simulation and reconstruction routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("oscillator order {order} exceeds the configured maximum {max}")]
    OrderOverflow { order: usize, max: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cutoff {dim} too small: truncation tail {tail:e} exceeds {bound:e}")]
    CutoffTooSmall { dim: usize, tail: f64, bound: f64 },

    #[error("photon-number cutoff cap {cap} reached with tail mass {tail:e}")]
    CutoffCapExceeded { cap: usize, tail: f64 },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("matrix is not Hermitian (deviation {0:e})")]
    NonHermitian(f64),

    #[error("single-photon statistics need equal efficiencies, got eta_c={eta_c}, eta_d={eta_d}")]
    UnequalEfficiencies { eta_c: f64, eta_d: f64 },

    #[error("unsupported state preparation for this operation: {0}")]
    UnsupportedPrep(String),

    #[error("pattern-function index {index} exceeds table maximum {max}")]
    IndexOverflow { index: usize, max: usize },

    #[error("quadrature value {x} lies outside the tabulated range [-{x_max}, {x_max}]")]
    OutOfGrid { x: f64, x_max: f64 },

    #[error("pattern function f_{n}{m} reached {value} (envelope {envelope}); table is numerically unstable")]
    Unstable { n: usize, m: usize, value: f64, envelope: f64 },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("phase coverage check failed: bin {bin} holds {fraction:.4} of the samples")]
    PhaseCoverage { bin: usize, fraction: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("fringe fit failed: {0}")]
    FitFailure(String),

    #[error("piezo step {0} has no calibrated phase")]
    UncalibratedStep(u32),
}
