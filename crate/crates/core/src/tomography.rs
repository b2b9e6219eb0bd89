//! Density-matrix reconstruction and quadrature-moment estimation from
//! phase-tagged quadrature samples.
//!
//! Samples are split into contiguous blocks in input order. Each block gives an
//! independent estimate; results report the block mean and the spread across
//! blocks. Block assignment is fixed, so outputs do not depend on the number of
//! worker threads.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{PI, SQRT_2};
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tracing::warn;

use crate::error::{Error, Result};
use crate::fock::{FockMatrix, StatePrep};
use crate::pattern::PatternFunctions;
use crate::sampling::HlSample;

pub const DEFAULT_BLOCKS: usize = 10;
/// Number of equal-width phase bins on `[0, pi)` in the coverage check.
pub const COVERAGE_BINS: usize = 12;
/// Smallest fraction of samples each coverage bin must hold.
pub const COVERAGE_MIN_FRACTION: f64 = 0.01;

/// A quadrature measurement tagged with the LO phase it was taken at.
pub trait QuadratureSample {
    fn quadrature(&self) -> f64;
    fn phase(&self) -> f64;
}

impl QuadratureSample for HlSample {
    fn quadrature(&self) -> f64 {
        self.delta_phi
    }
    fn phase(&self) -> f64 {
        self.phase
    }
}

/// `(x, phase)` pairs.
impl QuadratureSample for (f64, f64) {
    fn quadrature(&self) -> f64 {
        self.0
    }
    fn phase(&self) -> f64 {
        self.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructOptions {
    pub dim: usize,
    pub n_blocks: usize,
    /// Enforce the phase-coverage check (turn off for phase-insensitive states).
    pub phase_sensitive: bool,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        ReconstructOptions {
            dim: 8,
            n_blocks: DEFAULT_BLOCKS,
            phase_sensitive: true,
        }
    }
}

/// Block-averaged reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    pub rho: FockMatrix,
    /// Per-element standard deviation across blocks.
    pub rho_err: DMatrix<f64>,
    pub n_blocks: usize,
    pub n_samples: usize,
    pub metadata: BTreeMap<String, Value>,
}

/// On-disk form of [`ReconstructionResult`]; matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionDocument {
    pub dim: usize,
    pub rho_re: Vec<f64>,
    pub rho_im: Vec<f64>,
    pub rho_err: Vec<f64>,
    pub n_blocks: usize,
    pub n_samples: usize,
    pub metadata: BTreeMap<String, Value>,
}

impl ReconstructionResult {
    pub fn dim(&self) -> usize {
        self.rho.dim()
    }

    pub fn to_document(&self) -> ReconstructionDocument {
        let d = self.dim();
        let mut re = Vec::with_capacity(d * d);
        let mut im = Vec::with_capacity(d * d);
        let mut err = Vec::with_capacity(d * d);
        for n in 0..d {
            for m in 0..d {
                let z = self.rho.get(n, m);
                re.push(z.re);
                im.push(z.im);
                err.push(self.rho_err[(n, m)]);
            }
        }
        ReconstructionDocument {
            dim: d,
            rho_re: re,
            rho_im: im,
            rho_err: err,
            n_blocks: self.n_blocks,
            n_samples: self.n_samples,
            metadata: self.metadata.clone(),
        }
    }

    pub fn from_document(doc: &ReconstructionDocument) -> Result<Self> {
        let d = doc.dim;
        for len in [doc.rho_re.len(), doc.rho_im.len(), doc.rho_err.len()] {
            if len != d * d {
                return Err(Error::DimensionMismatch(len, d * d));
            }
        }
        let rho = DMatrix::from_fn(d, d, |n, m| Complex64::new(doc.rho_re[n * d + m], doc.rho_im[n * d + m]));
        Ok(ReconstructionResult {
            rho: FockMatrix::from_matrix(rho)?,
            rho_err: DMatrix::from_fn(d, d, |n, m| doc.rho_err[n * d + m]),
            n_blocks: doc.n_blocks,
            n_samples: doc.n_samples,
            metadata: doc.metadata.clone(),
        })
    }

    /// Writes `n,m,abs_rho,rho_err` rows for plotting.
    pub fn write_abs_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,m,abs_rho,rho_err")?;
        let d = self.dim();
        for n in 0..d {
            for m in 0..d {
                writeln!(w, "{n},{m},{},{}", self.rho.get(n, m).norm(), self.rho_err[(n, m)])?;
            }
        }
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_document()).expect("plain data serializes");
        std::fs::write(path, text + "\n").map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn validate_blocks<S>(samples: &[S], n_blocks: usize) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no samples".into()));
    }
    if n_blocks < 2 {
        return Err(Error::InvalidParameter(format!("n_blocks {n_blocks} < 2")));
    }
    if samples.len() < n_blocks {
        return Err(Error::InvalidParameter(format!(
            "{} samples cannot fill {n_blocks} blocks",
            samples.len()
        )));
    }
    Ok(())
}

/// Interleaved blocks: sample `i` goes to block `i % n_blocks`, so each block
/// spans the whole record even when the input is ordered by phase.
fn blocks<S>(samples: &[S], n_blocks: usize) -> Vec<Vec<&S>> {
    (0..n_blocks).map(|b| samples.iter().skip(b).step_by(n_blocks).collect()).collect()
}

/// Fraction of samples in each of the [`COVERAGE_BINS`] phase bins `[k pi/12, (k+1) pi/12)`,
/// phases taken modulo pi.
pub fn phase_coverage<S: QuadratureSample>(samples: &[S]) -> Vec<f64> {
    let mut counts = vec![0usize; COVERAGE_BINS];
    for s in samples {
        let r = s.phase().rem_euclid(PI);
        let bin = ((r / PI * COVERAGE_BINS as f64) as usize).min(COVERAGE_BINS - 1);
        counts[bin] += 1;
    }
    let total = samples.len().max(1) as f64;
    counts.into_iter().map(|c| c as f64 / total).collect()
}

fn check_coverage<S: QuadratureSample>(samples: &[S], enforce: bool) -> Result<()> {
    for (bin, &fraction) in phase_coverage(samples).iter().enumerate() {
        if fraction < COVERAGE_MIN_FRACTION {
            if enforce {
                return Err(Error::PhaseCoverage { bin, fraction });
            }
            warn!(bin, fraction, "sparse phase coverage");
        }
    }
    Ok(())
}

/// Distinct-argument count above which pattern values are computed per sample
/// instead of cached.
const CACHE_LIMIT: usize = 1 << 16;

enum Lookup<'a> {
    Cache(HashMap<u64, Vec<f64>>),
    Direct(&'a PatternFunctions),
}

fn pattern_lookup<'a, S: QuadratureSample + Sync>(
    samples: &[S],
    table: &'a PatternFunctions,
    dim: usize,
) -> Result<Lookup<'a>> {
    let mut keys: Vec<u64> = samples.iter().map(|s| s.quadrature().to_bits()).collect();
    keys.par_sort_unstable();
    keys.dedup();
    if keys.len() > CACHE_LIMIT {
        return Ok(Lookup::Direct(table));
    }
    let cache = keys
        .into_par_iter()
        .map(|k| Ok((k, table.lower_triangle(dim, f64::from_bits(k))?)))
        .collect::<Result<_>>()?;
    Ok(Lookup::Cache(cache))
}

fn block_estimate<S: QuadratureSample>(block: &[&S], lookup: &Lookup, dim: usize) -> DMatrix<Complex64> {
    let mut acc = vec![Complex64::new(0.0, 0.0); dim * (dim + 1) / 2];
    let mut rot = vec![Complex64::new(0.0, 0.0); dim];
    let mut scratch;
    for &s in block {
        let f: &[f64] = match lookup {
            Lookup::Cache(c) => &c[&s.quadrature().to_bits()],
            Lookup::Direct(t) => {
                // The table bound was chosen from the largest |x| in the data.
                scratch = t.lower_triangle(dim, s.quadrature()).expect("sample inside table range");
                &scratch
            }
        };
        for (d, r) in rot.iter_mut().enumerate() {
            *r = Complex64::from_polar(1.0, d as f64 * s.phase());
        }
        let mut idx = 0;
        for n in 0..dim {
            for m in 0..=n {
                acc[idx] += rot[n - m] * f[idx];
                idx += 1;
            }
        }
    }
    let inv = 1.0 / block.len() as f64;
    let mut rho = DMatrix::zeros(dim, dim);
    let mut idx = 0;
    for n in 0..dim {
        for m in 0..=n {
            let z = acc[idx] * inv;
            rho[(n, m)] = z;
            rho[(m, n)] = z.conj();
            idx += 1;
        }
    }
    rho
}

/// Pattern-function reconstruction of the density matrix.
pub fn reconstruct<S: QuadratureSample + Sync>(samples: &[S], opts: &ReconstructOptions) -> Result<ReconstructionResult> {
    validate_blocks(samples, opts.n_blocks)?;
    if opts.dim < 1 {
        return Err(Error::InvalidParameter("dim must be positive".into()));
    }
    if samples.iter().any(|s| !s.quadrature().is_finite() || !s.phase().is_finite()) {
        return Err(Error::Domain("non-finite sample".into()));
    }
    check_coverage(samples, opts.phase_sensitive)?;

    let reach = samples.iter().map(|s| s.quadrature().abs()).fold(0.0, f64::max);
    let table = PatternFunctions::with_bound(opts.dim - 1, reach + 1.0)?;
    let lookup = pattern_lookup(samples, &table, opts.dim)?;

    let estimates: Vec<DMatrix<Complex64>> = blocks(samples, opts.n_blocks)
        .into_par_iter()
        .map(|b| block_estimate(&b, &lookup, opts.dim))
        .collect();

    let nb = estimates.len() as f64;
    let mean = estimates.iter().fold(DMatrix::zeros(opts.dim, opts.dim), |a, e| a + e) / Complex64::new(nb, 0.0);
    let rho_err = DMatrix::from_fn(opts.dim, opts.dim, |n, m| {
        let ss: f64 = estimates.iter().map(|e| (e[(n, m)] - mean[(n, m)]).norm_sqr()).sum();
        (ss / (nb - 1.0)).sqrt()
    });
    let rho = FockMatrix::from_matrix(mean)?.hermitize();

    let mut metadata = BTreeMap::new();
    metadata.insert("dim".into(), Value::from(opts.dim));
    metadata.insert("pattern_x_max".into(), Value::from(table.x_max()));
    Ok(ReconstructionResult {
        rho,
        rho_err,
        n_blocks: opts.n_blocks,
        n_samples: samples.len(),
        metadata,
    })
}

/// Estimated first two moments of the quadrature at angle `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub theta: f64,
    pub mean_x: f64,
    pub mean_err: f64,
    pub var_x: f64,
    pub var_err: f64,
    pub eta_assumed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentOptions {
    pub theta: f64,
    /// Efficiency used in the second-moment kernel; 1 targets the detected state.
    pub eta: f64,
    pub n_blocks: usize,
    pub phase_sensitive: bool,
}

impl Default for MomentOptions {
    fn default() -> Self {
        MomentOptions {
            theta: 0.0,
            eta: 1.0,
            n_blocks: DEFAULT_BLOCKS,
            phase_sensitive: true,
        }
    }
}

/// Kernel for `<x_theta>`: `2 x cos(phi - theta)`.
pub fn mean_kernel(x: f64, phase: f64, theta: f64) -> f64 {
    2.0 * x * (phase - theta).cos()
}

/// Kernel for `<x_theta^2>`: `(4x^2 - 1/eta)(4 cos^2(phi - theta) - 1)/4 + 1/4`.
pub fn second_moment_kernel(x: f64, phase: f64, theta: f64, eta: f64) -> f64 {
    let c = (phase - theta).cos();
    (4.0 * x * x - 1.0 / eta) * (4.0 * c * c - 1.0) / 4.0 + 0.25
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Kernel estimates of `<x_theta>` and `var[x_theta]` with block standard errors.
pub fn estimate_moments<S: QuadratureSample + Sync>(samples: &[S], opts: &MomentOptions) -> Result<MomentEstimate> {
    validate_blocks(samples, opts.n_blocks)?;
    if !(opts.eta > 0.0 && opts.eta <= 1.0) {
        return Err(Error::InvalidParameter(format!("kernel efficiency {}", opts.eta)));
    }
    check_coverage(samples, opts.phase_sensitive)?;
    let per_block: Vec<(f64, f64)> = blocks(samples, opts.n_blocks)
        .into_par_iter()
        .map(|b| {
            let (mut first, mut second) = (0.0, 0.0);
            for s in &b {
                first += mean_kernel(s.quadrature(), s.phase(), opts.theta);
                second += second_moment_kernel(s.quadrature(), s.phase(), opts.theta, opts.eta);
            }
            let n = b.len() as f64;
            let m = first / n;
            (m, second / n - m * m)
        })
        .collect();
    let means: Vec<f64> = per_block.iter().map(|p| p.0).collect();
    let vars: Vec<f64> = per_block.iter().map(|p| p.1).collect();
    let (mean_x, mean_err) = mean_and_se(&means);
    let (var_x, var_err) = mean_and_se(&vars);
    Ok(MomentEstimate {
        theta: opts.theta,
        mean_x,
        mean_err,
        var_x,
        var_err,
        eta_assumed: opts.eta,
    })
}

/// Mean and variance of the rescaled count difference expected for an ideal
/// homodyne-like measurement: the quadrature moments plus the shot-noise
/// contribution of the signal, `|alpha|^2 / (2 |beta|^2)`.
pub fn theory_moments(prep: &StatePrep, lo_magnitude: f64, theta: f64) -> Result<(f64, f64)> {
    if !(lo_magnitude > 0.0) {
        return Err(Error::InvalidParameter(format!("LO magnitude {lo_magnitude}")));
    }
    let b2 = lo_magnitude * lo_magnitude;
    match *prep {
        StatePrep::Coherent(alpha) => {
            let mean = SQRT_2 * (alpha * Complex64::from_polar(1.0, -theta)).re;
            Ok((mean, 0.5 + alpha.norm_sqr() / (2.0 * b2)))
        }
        StatePrep::Phav(r) => Ok((0.0, 0.5 + r * r + r * r / (2.0 * b2))),
        other => Err(Error::UnsupportedPrep(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn theory_values() {
        let (m, v) = theory_moments(&StatePrep::Coherent(Complex64::new(1.03, 0.0)), 3.82, 0.0).unwrap();
        assert_relative_eq!(m, 1.456, epsilon = 1e-3);
        assert_relative_eq!(v, 0.536, epsilon = 5e-4);
        let (m, v) = theory_moments(&StatePrep::Phav(1.08), 3.82, 0.9).unwrap();
        assert_eq!(m, 0.0);
        assert_relative_eq!(v, 1.706, epsilon = 5e-4);
        let (_, v) = theory_moments(&StatePrep::Coherent(Complex64::new(1.03, 0.0)), 1e6, 0.0).unwrap();
        assert_relative_eq!(v, 0.5, epsilon = 1e-12);
        assert!(matches!(
            theory_moments(&StatePrep::Fock(1), 3.0, 0.0),
            Err(Error::UnsupportedPrep(_))
        ));
    }

    #[test]
    fn block_split_is_interleaved_and_balanced() {
        let v: Vec<u32> = (0..23).collect();
        let b = blocks(&v, 5);
        assert_eq!(b.iter().map(|s| s.len()).collect::<Vec<_>>(), vec![5, 5, 5, 4, 4]);
        assert_eq!(b[1].iter().map(|&&x| x).collect::<Vec<_>>(), vec![1, 6, 11, 16, 21]);
        let mut all: Vec<u32> = b.concat().into_iter().copied().collect();
        all.sort();
        assert_eq!(all, v);
    }

    #[test]
    fn coverage_bins() {
        let s: Vec<(f64, f64)> = (0..1200).map(|i| (0.0, (i as f64 + 0.5) * PI / 1200.0 + PI)).collect();
        let cov = phase_coverage(&s);
        assert!(cov.iter().all(|&c| (c - 1.0 / 12.0).abs() < 1e-12));
        let narrow: Vec<(f64, f64)> = (0..100).map(|i| (0.0, i as f64 * 1e-3)).collect();
        assert!(matches!(
            reconstruct(&narrow, &ReconstructOptions::default()),
            Err(Error::PhaseCoverage { bin: 1, .. })
        ));
        let relaxed = ReconstructOptions {
            phase_sensitive: false,
            ..ReconstructOptions::default()
        };
        assert!(reconstruct(&narrow, &relaxed).is_ok());
    }

    #[test]
    fn input_errors() {
        let empty: Vec<HlSample> = vec![];
        assert!(matches!(reconstruct(&empty, &ReconstructOptions::default()), Err(Error::EmptyInput(_))));
        let one = vec![(0.0, 0.0); 20];
        let opts = ReconstructOptions {
            n_blocks: 1,
            phase_sensitive: false,
            ..ReconstructOptions::default()
        };
        assert!(reconstruct(&one, &opts).is_err());
        let bad_eta = MomentOptions {
            eta: 0.0,
            phase_sensitive: false,
            ..MomentOptions::default()
        };
        assert!(estimate_moments(&one, &bad_eta).is_err());
    }

    #[test]
    fn document_round_trip() {
        let s: Vec<(f64, f64)> = (0..600).map(|i| ((i % 7) as f64 * 0.3 - 1.0, i as f64 * PI / 600.0)).collect();
        let r = reconstruct(&s, &ReconstructOptions { dim: 3, n_blocks: 3, phase_sensitive: true }).unwrap();
        let back = ReconstructionResult::from_document(&r.to_document()).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.rho.hermiticity_defect(), 0.0);
        let mut csv = Vec::new();
        r.write_abs_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 10);
    }

    #[test]
    fn kernels_reproduce_gaussian_moments() {
        // Exact phase average on a uniform grid of a Gaussian quadrature law
        // with mean a cos(phi) and variance v: the kernels return a and v.
        let (a, v) = (1.3, 0.6);
        let n_phi = 64;
        let (mut first, mut second) = (0.0, 0.0);
        for k in 0..n_phi {
            let phi = k as f64 * PI / n_phi as f64;
            let mu = a * phi.cos();
            // E[x] = mu, E[x^2] = v + mu^2; kernels are affine in x and x^2.
            first += 2.0 * mu * phi.cos();
            let c = phi.cos();
            second += (4.0 * (v + mu * mu) - 1.0) * (4.0 * c * c - 1.0) / 4.0 + 0.25;
        }
        first /= n_phi as f64;
        second /= n_phi as f64;
        assert_relative_eq!(first, a, epsilon = 1e-12);
        assert_relative_eq!(second - first * first, v, epsilon = 1e-12);
        assert_relative_eq!(mean_kernel(1.0, 0.0, 0.0), 2.0);
        assert_relative_eq!(second_moment_kernel(0.5, 0.0, 0.0, 1.0), 0.25 * 0.0 * 3.0 + 0.25 + 0.0);
    }
}
