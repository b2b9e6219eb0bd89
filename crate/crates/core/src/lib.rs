//! Homodyne-like detection with photon-number-resolving detectors and
//! pattern-function quantum state tomography.
//!
//! A weak signal and a local oscillator (LO) of comparable strength are mixed
//! on a balanced beam splitter; the photon counts `n_c`, `n_d` at the two
//! outputs give `delta = n_c - n_d`, which rescaled by the LO amplitude plays
//! the role of a quadrature sample. [`detection`] computes the exact count
//! statistics, [`sampling`] draws seeded Monte Carlo traces, [`ingestion`]
//! reads raw traces and calibrates the LO phase, and [`tomography`]
//! reconstructs the density matrix.

pub mod detection;
pub mod error;
pub mod fock;
pub mod ingestion;
pub mod oscillator;
pub mod pattern;
pub mod sampling;
pub mod tomography;

pub use detection::{
    hl_distribution, joint_statistics, rescale_delta, DetectorEfficiency, HlDistribution,
    JointCountDistribution, LoField,
};
pub use error::{Error, Result};
pub use fock::{build_state, fidelity, mean_photon_number, projected_state, FockMatrix, StatePrep};
pub use ingestion::{PhaseCalibration, RawPulseRecord};
pub use pattern::PatternFunctions;
pub use sampling::{sample_trace, HlSample};
pub use tomography::{
    estimate_moments, reconstruct, MomentEstimate, MomentOptions, ReconstructOptions,
    ReconstructionResult,
};
