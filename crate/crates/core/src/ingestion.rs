//! Raw two-detector pulse records: trace files, interference-fringe phase
//! calibration, and per-pulse phase assignment.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{Error, Result};
use crate::sampling::{substream, HlSample};

/// Exact header line of a trace file.
pub const TRACE_HEADER: &str = "pulse,piezo_step,n_c,n_d";
/// Phase increment between consecutive pulses of one piezo step.
pub const DEFAULT_SPREAD_STEP: f64 = 1.0 / 5.0e4;
/// Records per step below which the fringe fit warns.
pub const MIN_RECORDS_PER_STEP: usize = 100;

const PHASE_STREAM: u64 = u64::MAX - 1;
const NOISE_STREAM: u64 = u64::MAX - 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPulseRecord {
    pub pulse: u64,
    pub piezo_step: u32,
    pub n_c: u64,
    pub n_d: u64,
}

impl RawPulseRecord {
    pub fn delta(&self) -> i64 {
        self.n_c as i64 - self.n_d as i64
    }
}

/// Records read from a trace file plus the line numbers that failed to parse
/// (only non-empty in lenient mode).
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedTrace {
    pub records: Vec<RawPulseRecord>,
    pub malformed_lines: Vec<usize>,
}

fn parse_record(line: &str) -> std::result::Result<RawPulseRecord, String> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 fields, found {}", fields.len()));
    }
    let int = |i: usize, name: &str| {
        let f = fields[i];
        if f.is_empty() || !f.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("{name} '{f}' is not a non-negative integer"));
        }
        f.parse::<u64>().map_err(|e| format!("{name} '{f}': {e}"))
    };
    let step = int(1, "piezo_step")?;
    Ok(RawPulseRecord {
        pulse: int(0, "pulse")?,
        piezo_step: u32::try_from(step).map_err(|_| format!("piezo_step {step} out of range"))?,
        n_c: int(2, "n_c")?,
        n_d: int(3, "n_d")?,
    })
}

/// Reads a trace file. In strict mode the first malformed row aborts with its
/// line number; in lenient mode malformed rows are skipped and reported.
pub fn load_trace(path: &Path, lenient: bool) -> Result<LoadedTrace> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut records = Vec::new();
    let mut malformed_lines = Vec::new();
    let mut lines = reader.split(b'\n').enumerate().peekable();
    match lines.next() {
        Some((_, Ok(h))) if h == TRACE_HEADER.as_bytes() => {}
        Some((_, Err(e))) => return Err(io_err(e)),
        _ => {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                line: 1,
                message: format!("header must be '{TRACE_HEADER}'"),
            })
        }
    }
    while let Some((i, line)) = lines.next() {
        let line = line.map_err(io_err)?;
        let lineno = i + 1;
        // A terminating LF leaves one empty final segment.
        if line.is_empty() && lines.peek().is_none() {
            break;
        }
        let parsed = std::str::from_utf8(&line)
            .map_err(|_| "invalid UTF-8".to_string())
            .and_then(parse_record);
        match parsed {
            Ok(r) => records.push(r),
            Err(message) if !lenient => {
                return Err(Error::Schema {
                    path: path.to_path_buf(),
                    line: lineno,
                    message,
                })
            }
            Err(message) => {
                warn!(line = lineno, %message, "skipping malformed record");
                malformed_lines.push(lineno);
            }
        }
    }
    Ok(LoadedTrace {
        records,
        malformed_lines,
    })
}

pub fn write_trace_to<W: Write>(mut w: W, records: &[RawPulseRecord]) -> std::io::Result<()> {
    w.write_all(TRACE_HEADER.as_bytes())?;
    w.write_all(b"\n")?;
    for r in records {
        writeln!(w, "{},{},{},{}", r.pulse, r.piezo_step, r.n_c, r.n_d)?;
    }
    w.flush()
}

pub fn write_trace(path: &Path, records: &[RawPulseRecord]) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_trace_to(BufWriter::new(file), records).map_err(io_err)
}

/// Reflects any phase into `[0, pi]`: `phi mod 2pi`, mirrored about pi when it
/// exceeds pi.
pub fn fold_phase(phi: f64) -> f64 {
    let t = phi.rem_euclid(2.0 * PI);
    if t > PI {
        2.0 * PI - t
    } else {
        t
    }
}

/// Which detector output drives the fringe fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FringeChannel {
    /// Mean of `n_c`.
    #[default]
    C,
    /// Mean of `-n_d` (output d is in antiphase).
    D,
    /// Mean of `(n_c - n_d) / 2`.
    Average,
}

impl FringeChannel {
    fn value(&self, r: &RawPulseRecord) -> f64 {
        match self {
            FringeChannel::C => r.n_c as f64,
            FringeChannel::D => -(r.n_d as f64),
            FringeChannel::Average => 0.5 * (r.n_c as f64 - r.n_d as f64),
        }
    }
}

/// `A + B cos(omega s + delta)` over piezo step `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeParams {
    #[serde(rename = "A")]
    pub offset: f64,
    #[serde(rename = "B")]
    pub amplitude: f64,
    pub omega: f64,
    pub delta: f64,
}

impl FringeParams {
    pub fn eval(&self, step: f64) -> f64 {
        self.offset + self.amplitude * (self.omega * step + self.delta).cos()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCalibration {
    pub phi_per_step: Vec<f64>,
    pub fit_params: FringeParams,
    pub residual_rms: f64,
}

impl PhaseCalibration {
    /// Calibration with known step phases (no fit).
    pub fn from_phases(phi_per_step: Vec<f64>) -> Self {
        PhaseCalibration {
            phi_per_step,
            fit_params: FringeParams {
                offset: 0.0,
                amplitude: 0.0,
                omega: 0.0,
                delta: 0.0,
            },
            residual_rms: 0.0,
        }
    }
}

/// Linear least squares of `A + C cos(omega s) + S sin(omega s)`; returns
/// `(A, C, S, rss)`.
fn linear_fringe(steps: &[f64], y: &[f64], omega: f64) -> Option<(f64, f64, f64, f64)> {
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for (&s, &v) in steps.iter().zip(y) {
        let row = Vector3::new(1.0, (omega * s).cos(), (omega * s).sin());
        ata += row * row.transpose();
        aty += row * v;
    }
    let sol = ata.cholesky()?.solve(&aty);
    let rss = steps
        .iter()
        .zip(y)
        .map(|(&s, &v)| (v - sol[0] - sol[1] * (omega * s).cos() - sol[2] * (omega * s).sin()).powi(2))
        .sum();
    Some((sol[0], sol[1], sol[2], rss))
}

fn rss(p: &FringeParams, steps: &[f64], y: &[f64]) -> f64 {
    steps.iter().zip(y).map(|(&s, &v)| (v - p.eval(s)).powi(2)).sum()
}

/// Levenberg-Marquardt refinement of all four fringe parameters.
fn refine(mut p: FringeParams, steps: &[f64], y: &[f64]) -> Result<FringeParams> {
    let mut cost = rss(&p, steps, y);
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for (&s, &v) in steps.iter().zip(y) {
            let arg = p.omega * s + p.delta;
            let (sin, cos) = arg.sin_cos();
            let j = Vector4::new(1.0, cos, -p.amplitude * s * sin, -p.amplitude * sin);
            jtj += j * j.transpose();
            jtr += j * (v - p.eval(s));
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = jtj;
            for k in 0..4 {
                damped[(k, k)] *= 1.0 + lambda;
            }
            let step = damped
                .lu()
                .solve(&jtr)
                .ok_or_else(|| Error::FitFailure("singular normal equations".into()))?;
            let trial = FringeParams {
                offset: p.offset + step[0],
                amplitude: p.amplitude + step[1],
                omega: p.omega + step[2],
                delta: p.delta + step[3],
            };
            let trial_cost = rss(&trial, steps, y);
            if trial_cost <= cost {
                let small = step.iter().zip([p.offset, p.amplitude, p.omega, p.delta]).all(|(d, v)| d.abs() <= 1e-15 * (1.0 + v.abs()));
                p = trial;
                cost = trial_cost;
                lambda = (lambda * 0.3).max(1e-15);
                improved = true;
                if small {
                    return Ok(p);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Ok(p)
}

/// Fits the interference fringe of the per-step mean counts and converts it
/// to one LO phase per piezo step.
pub fn fit_phase_calibration(
    records: &[RawPulseRecord],
    n_steps: usize,
    channel: FringeChannel,
) -> Result<PhaseCalibration> {
    if n_steps < 8 {
        return Err(Error::FitFailure(format!("{n_steps} piezo steps, need at least 8")));
    }
    let mut sums = vec![0.0; n_steps];
    let mut counts = vec![0usize; n_steps];
    for r in records {
        let s = r.piezo_step as usize;
        if s >= n_steps {
            return Err(Error::InvalidParameter(format!("piezo step {s} outside [0, {n_steps})")));
        }
        sums[s] += channel.value(r);
        counts[s] += 1;
    }
    let (mut steps, mut y) = (Vec::new(), Vec::new());
    for s in 0..n_steps {
        if counts[s] < MIN_RECORDS_PER_STEP {
            warn!(step = s, records = counts[s], "few records for piezo step");
        }
        if counts[s] > 0 {
            steps.push(s as f64);
            y.push(sums[s] / counts[s] as f64);
        }
    }
    if steps.len() < 8 {
        return Err(Error::FitFailure(format!("only {} populated steps", steps.len())));
    }

    // Frequency scan on (0, pi]: the best linear fit picks the starting point.
    let grid = 4096;
    let mut best: Option<(f64, (f64, f64, f64, f64))> = None;
    for k in 1..=grid {
        let omega = PI * k as f64 / grid as f64;
        if let Some(fit) = linear_fringe(&steps, &y, omega) {
            if best.is_none_or(|(_, b)| fit.3 < b.3) {
                best = Some((omega, fit));
            }
        }
    }
    let (omega0, (a0, c0, s0, _)) = best.ok_or_else(|| Error::FitFailure("singular normal equations".into()))?;
    let scale = y.iter().map(|v| v.abs()).fold(1.0, f64::max);
    if c0.hypot(s0) <= 1e-9 * scale {
        return Err(Error::FitFailure("no fringe visible in the mean counts".into()));
    }
    // C cos + S sin = B cos(omega s + delta) with B = hypot(C, S), delta = atan2(-S, C)
    let start = FringeParams {
        offset: a0,
        amplitude: c0.hypot(s0),
        omega: omega0,
        delta: (-s0).atan2(c0),
    };
    let mut p = refine(start, &steps, &y)?;
    if !(p.amplitude.is_finite() && p.omega.is_finite()) || p.amplitude.abs() <= 1e-9 * scale {
        return Err(Error::FitFailure("fringe amplitude collapsed".into()));
    }
    if p.amplitude < 0.0 {
        p.amplitude = -p.amplitude;
        p.delta += PI;
    }
    if p.omega < 0.0 {
        p.omega = -p.omega;
        p.delta = -p.delta;
    }
    p.delta = p.delta.rem_euclid(2.0 * PI);

    let residual_rms = (rss(&p, &steps, &y) / steps.len() as f64).sqrt();
    if residual_rms > 0.05 * p.amplitude {
        warn!(residual_rms, amplitude = p.amplitude, "poor fringe fit");
    }
    Ok(PhaseCalibration {
        phi_per_step: (0..n_steps).map(|s| fold_phase(p.omega * s as f64 + p.delta)).collect(),
        fit_params: p,
        residual_rms,
    })
}

/// Phase of the `j`-th of `count` pulses recorded at a step with phase `center`.
pub fn spread_phase(center: f64, j: usize, count: usize, spread_step: f64) -> f64 {
    fold_phase(center + (j as f64 - count as f64 / 2.0) * spread_step)
}

/// Gives each record its step phase, spread uniformly around the step value
/// in record order, and rescales the count difference.
pub fn assign_phases(
    records: &[RawPulseRecord],
    calibration: &PhaseCalibration,
    spread_step: f64,
    lo_magnitude: f64,
) -> Result<Vec<HlSample>> {
    let n_steps = calibration.phi_per_step.len();
    let mut per_step = vec![0usize; n_steps];
    for r in records {
        let s = r.piezo_step as usize;
        if s >= n_steps {
            return Err(Error::UncalibratedStep(r.piezo_step));
        }
        per_step[s] += 1;
    }
    let mut seen = vec![0usize; n_steps];
    records
        .iter()
        .map(|r| {
            let s = r.piezo_step as usize;
            let phase = spread_phase(calibration.phi_per_step[s], seen[s], per_step[s], spread_step);
            seen[s] += 1;
            HlSample::new(r.delta(), lo_magnitude, phase)
        })
        .collect()
}

/// Uniform random phases on `[0, pi)` for phase-insensitive signals.
pub fn randomize_phases(records: &[RawPulseRecord], lo_magnitude: f64, seed: u64) -> Result<Vec<HlSample>> {
    let mut rng = substream(seed, PHASE_STREAM);
    records
        .iter()
        .map(|r| HlSample::new(r.delta(), lo_magnitude, rng.random::<f64>() * PI))
        .collect()
}

/// Adds Gaussian jitter of standard deviation `sigma` to every phase.
pub fn inject_phase_noise(samples: &[HlSample], sigma: f64, seed: u64) -> Result<Vec<HlSample>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("phase noise sigma {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(samples.to_vec());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = substream(seed, NOISE_STREAM);
    Ok(samples
        .iter()
        .map(|s| HlSample {
            phase: fold_phase(s.phase + normal.sample(&mut rng)),
            ..*s
        })
        .collect())
}

/// Nominal phase of each piezo step when `n_steps` steps span `[0, pi)`.
pub fn nominal_step_phases(n_steps: usize) -> Vec<f64> {
    (0..n_steps).map(|s| s as f64 * PI / n_steps as f64).collect()
}

/// Piezo step of every pulse when `n_pulses` are split into `n_steps`
/// contiguous runs of (nearly) equal length.
pub fn contiguous_steps(n_pulses: usize, n_steps: usize) -> Vec<u32> {
    (0..n_pulses).map(|i| (i * n_steps / n_pulses.max(1)) as u32).collect()
}
