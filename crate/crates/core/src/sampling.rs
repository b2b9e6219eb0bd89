//! Seeded Monte Carlo generation of homodyne-like detection events.
//!
//! The pulse sequence is cut into fixed-size chunks. Chunk `k` draws from a
//! ChaCha20 generator seeded with the run seed and switched to stream `k`, so the
//! output depends only on `(seed, phases)` and not on the thread count.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{
    joint_statistics_with, rescale_delta, CutoffPolicy, DetectorEfficiency, LoField,
};
use crate::error::{Error, Result};
use crate::fock::StatePrep;

/// Identifier recorded in run metadata.
pub const RNG_ALGORITHM: &str =
    "chacha20/rand_chacha-0.9;stream=chunk-index;chunk=16384;poisson=rand_distr-0.5";

pub const CHUNK_LEN: usize = 16_384;

const SAMPLING_TAIL_TOL: f64 = 1e-12;

/// Generator for substream `stream` of a run seeded with `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One detection event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HlSample {
    /// Count difference `n_c - n_d`.
    pub delta: i64,
    /// `delta / (sqrt(2) |beta|)`, the quadrature-like value.
    pub delta_phi: f64,
    /// LO phase in radians.
    pub phase: f64,
}

impl HlSample {
    pub fn new(delta: i64, lo_magnitude: f64, phase: f64) -> Result<Self> {
        Ok(HlSample {
            delta,
            delta_phi: rescale_delta(delta, lo_magnitude)?,
            phase,
        })
    }
}

/// Photon counts registered at the two outputs for one pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountPair {
    pub n_c: u64,
    pub n_d: u64,
}

impl CountPair {
    pub fn delta(&self) -> i64 {
        self.n_c as i64 - self.n_d as i64
    }
}

fn poisson_draw<R: Rng>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    // The constructor only rejects non-positive or non-finite means.
    Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
}

fn coherent_pair<R: Rng>(alpha: Complex64, beta: Complex64, eff: &DetectorEfficiency, rng: &mut R) -> CountPair {
    let mc = eff.eta_c * 0.5 * (beta + alpha).norm_sqr();
    let md = eff.eta_d * 0.5 * (beta - alpha).norm_sqr();
    CountPair {
        n_c: poisson_draw(mc, rng),
        n_d: poisson_draw(md, rng),
    }
}

enum Sampler {
    Coherent(Complex64),
    Phav(f64),
    /// Phase-independent table: cumulative weights over the flattened `q(n, m)`.
    Table { cdf: Vec<f64>, width: usize },
}

impl Sampler {
    fn new(prep: &StatePrep, lo_magnitude: f64, eff: &DetectorEfficiency) -> Result<Self> {
        prep.validate()?;
        Ok(match *prep {
            StatePrep::Coherent(alpha) => Sampler::Coherent(alpha),
            StatePrep::Phav(r) => Sampler::Phav(r),
            StatePrep::Fock(_) | StatePrep::AttenuatedFock1(_) => {
                let lo = LoField::new(lo_magnitude, 0.0)?;
                let policy = CutoffPolicy {
                    tail_tol: SAMPLING_TAIL_TOL,
                    ..CutoffPolicy::default()
                };
                let q = joint_statistics_with(prep, &lo, eff, policy)?;
                let mut acc = 0.0;
                let cdf = q
                    .table()
                    .iter()
                    .map(|&p| {
                        acc += p;
                        acc
                    })
                    .collect();
                Sampler::Table {
                    cdf,
                    width: q.n_max() + 1,
                }
            }
        })
    }

    fn draw<R: Rng>(&self, lo_magnitude: f64, phase: f64, eff: &DetectorEfficiency, rng: &mut R) -> CountPair {
        match self {
            Sampler::Coherent(alpha) => {
                coherent_pair(*alpha, Complex64::from_polar(lo_magnitude, phase), eff, rng)
            }
            Sampler::Phav(r) => {
                let theta = rng.random::<f64>() * 2.0 * PI;
                coherent_pair(
                    Complex64::from_polar(*r, theta),
                    Complex64::from_polar(lo_magnitude, phase),
                    eff,
                    rng,
                )
            }
            Sampler::Table { cdf, width } => {
                let total = *cdf.last().expect("non-empty table");
                let u = rng.random::<f64>() * total;
                let idx = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                CountPair {
                    n_c: (idx / width) as u64,
                    n_d: (idx % width) as u64,
                }
            }
        }
    }
}

/// Draws the detector counts for one pulse per entry of `phases`.
pub fn sample_counts(
    prep: &StatePrep,
    lo_magnitude: f64,
    phases: &[f64],
    eff: &DetectorEfficiency,
    seed: u64,
) -> Result<Vec<CountPair>> {
    LoField::new(lo_magnitude, 0.0)?;
    if phases.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidParameter("non-finite phase".into()));
    }
    if phases.is_empty() {
        return Ok(Vec::new());
    }
    let sampler = Sampler::new(prep, lo_magnitude, eff)?;
    let chunks: Vec<Vec<CountPair>> = phases
        .par_chunks(CHUNK_LEN)
        .enumerate()
        .map(|(k, chunk)| {
            let mut rng = substream(seed, k as u64);
            chunk
                .iter()
                .map(|&phase| sampler.draw(lo_magnitude, phase, eff, &mut rng))
                .collect()
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}

/// Monte Carlo homodyne-like trace: one sample per phase, with the count
/// difference rescaled by the detected LO amplitude.
pub fn sample_trace(
    prep: &StatePrep,
    lo_magnitude: f64,
    phases: &[f64],
    eff: &DetectorEfficiency,
    seed: u64,
) -> Result<Vec<HlSample>> {
    if phases.is_empty() {
        return Err(Error::EmptyInput("phase sequence".into()));
    }
    let counts = sample_counts(prep, lo_magnitude, phases, eff, seed)?;
    let scale = eff.detected_lo_magnitude(lo_magnitude);
    counts
        .iter()
        .zip(phases)
        .map(|(c, &phase)| HlSample::new(c.delta(), scale, phase))
        .collect()
}
