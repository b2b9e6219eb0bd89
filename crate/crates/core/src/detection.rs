//! Forward model of the homodyne-like detector: joint photon-count statistics
//! behind the balanced beam splitter and the distribution of their difference.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::StatePrep;

/// Accepted tail mass of a joint count table.
pub const JOINT_TAIL_TOL: f64 = 1e-9;
/// Largest per-output photon-number cutoff tried before giving up.
pub const DEFAULT_CUTOFF_CAP: usize = 4096;

const PHAV_QUADRATURE_TOL: f64 = 1e-12;
const PHAV_MAX_NODES: usize = 1 << 14;

/// Local-oscillator field `|beta| e^{i phi}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoField {
    pub magnitude: f64,
    pub phase: f64,
}

impl LoField {
    pub fn new(magnitude: f64, phase: f64) -> Result<Self> {
        if !(magnitude > 0.0 && magnitude.is_finite()) {
            return Err(Error::InvalidParameter(format!("LO magnitude {magnitude}")));
        }
        if !phase.is_finite() {
            return Err(Error::InvalidParameter(format!("LO phase {phase}")));
        }
        Ok(LoField { magnitude, phase })
    }

    pub fn amplitude(&self) -> Complex64 {
        Complex64::from_polar(self.magnitude, self.phase)
    }
}

/// Quantum efficiencies of the detectors on the two beam-splitter outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorEfficiency {
    pub eta_c: f64,
    pub eta_d: f64,
}

impl DetectorEfficiency {
    pub const IDEAL: DetectorEfficiency = DetectorEfficiency { eta_c: 1.0, eta_d: 1.0 };

    pub fn new(eta_c: f64, eta_d: f64) -> Result<Self> {
        for eta in [eta_c, eta_d] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::InvalidParameter(format!("efficiency {eta} outside (0,1]")));
            }
        }
        Ok(DetectorEfficiency { eta_c, eta_d })
    }

    pub fn equal(eta: f64) -> Result<Self> {
        Self::new(eta, eta)
    }

    pub fn mean(&self) -> f64 {
        0.5 * (self.eta_c + self.eta_d)
    }

    /// LO amplitude as seen by the detectors, `|beta| sqrt(eta)`; this is the
    /// scale used to turn count differences into quadrature values.
    pub fn detected_lo_magnitude(&self, lo_magnitude: f64) -> f64 {
        lo_magnitude * self.mean().sqrt()
    }
}

/// `Delta / (sqrt(2) |beta|)`
pub fn rescale_delta(delta: i64, lo_magnitude: f64) -> Result<f64> {
    if !(lo_magnitude > 0.0 && lo_magnitude.is_finite()) {
        return Err(Error::InvalidParameter(format!("LO magnitude {lo_magnitude}")));
    }
    Ok(delta as f64 / (SQRT_2 * lo_magnitude))
}

/// Joint distribution `q(n, m)` of the counts at the two outputs, truncated at
/// `n, m <= n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCountDistribution {
    n_max: usize,
    table: Vec<f64>,
    tail_mass: f64,
}

impl JointCountDistribution {
    fn from_table(n_max: usize, table: Vec<f64>) -> Self {
        let total: f64 = table.iter().sum();
        JointCountDistribution {
            n_max,
            table,
            tail_mass: (1.0 - total).max(0.0),
        }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn get(&self, n: usize, m: usize) -> f64 {
        if n > self.n_max || m > self.n_max {
            0.0
        } else {
            self.table[n * (self.n_max + 1) + m]
        }
    }

    /// Row-major table, `(n_max + 1)^2` entries.
    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn total(&self) -> f64 {
        self.table.iter().sum()
    }
}

fn poisson_row(mean: f64, n_max: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(n_max + 1);
    let mut p = (-mean).exp();
    for n in 0..=n_max {
        row.push(p);
        p *= mean / (n as f64 + 1.0);
    }
    row
}

fn product_poisson(mean_c: f64, mean_d: f64, n_max: usize) -> Vec<f64> {
    let pc = poisson_row(mean_c, n_max);
    let pd = poisson_row(mean_d, n_max);
    let mut t = Vec::with_capacity((n_max + 1) * (n_max + 1));
    for &a in &pc {
        t.extend(pd.iter().map(|&b| a * b));
    }
    t
}

fn coherent_means(alpha: Complex64, lo: &LoField, eff: &DetectorEfficiency) -> (f64, f64) {
    let beta = lo.amplitude();
    (
        eff.eta_c * 0.5 * (beta + alpha).norm_sqr(),
        eff.eta_d * 0.5 * (beta - alpha).norm_sqr(),
    )
}

fn phav_table(r: f64, lo: &LoField, eff: &DetectorEfficiency, n_max: usize) -> Result<Vec<f64>> {
    let average = |nodes: usize| {
        let mut acc = vec![0.0; (n_max + 1) * (n_max + 1)];
        for k in 0..nodes {
            let theta = 2.0 * PI * k as f64 / nodes as f64;
            let (mc, md) = coherent_means(Complex64::from_polar(r, theta), lo, eff);
            for (a, q) in acc.iter_mut().zip(product_poisson(mc, md, n_max)) {
                *a += q;
            }
        }
        let w = 1.0 / nodes as f64;
        acc.iter_mut().for_each(|a| *a *= w);
        acc
    };
    let mut nodes = 16;
    let mut current = average(nodes);
    loop {
        let refined = average(2 * nodes);
        let change = current
            .iter()
            .zip(&refined)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if change <= PHAV_QUADRATURE_TOL {
            return Ok(refined);
        }
        nodes *= 2;
        if nodes > PHAV_MAX_NODES {
            return Err(Error::Domain(format!(
                "phase average did not converge (last change {change:e})"
            )));
        }
        current = refined;
    }
}

/// Closed form for a single photon with equal efficiencies `eta`:
/// `q = e^{-eta b2} (eta b2 / 2)^{n+m} / (n! m!) [1 + ((n-m)^2 - eta b2) / b2]`, `b2 = |beta|^2`.
fn single_photon_table(lo: &LoField, eta: f64, n_max: usize) -> Vec<f64> {
    let b2 = lo.magnitude * lo.magnitude;
    let base = product_poisson(0.5 * eta * b2, 0.5 * eta * b2, n_max);
    let mut t = base;
    for n in 0..=n_max {
        for m in 0..=n_max {
            let d = n as f64 - m as f64;
            t[n * (n_max + 1) + m] *= 1.0 + (d * d - eta * b2) / b2;
        }
    }
    t
}

fn single_photon_eta(eff: &DetectorEfficiency) -> Result<f64> {
    if eff.eta_c != eff.eta_d {
        return Err(Error::UnequalEfficiencies {
            eta_c: eff.eta_c,
            eta_d: eff.eta_d,
        });
    }
    Ok(eff.eta_c)
}

fn table_for(prep: &StatePrep, lo: &LoField, eff: &DetectorEfficiency, n_max: usize) -> Result<Vec<f64>> {
    Ok(match *prep {
        StatePrep::Coherent(alpha) => {
            let (mc, md) = coherent_means(alpha, lo, eff);
            product_poisson(mc, md, n_max)
        }
        StatePrep::Phav(r) => phav_table(r, lo, eff, n_max)?,
        StatePrep::Fock(0) => {
            let (mc, md) = coherent_means(Complex64::new(0.0, 0.0), lo, eff);
            product_poisson(mc, md, n_max)
        }
        StatePrep::Fock(1) => single_photon_table(lo, single_photon_eta(eff)?, n_max),
        StatePrep::AttenuatedFock1(s) => {
            let one = single_photon_table(lo, single_photon_eta(eff)?, n_max);
            let (mc, md) = coherent_means(Complex64::new(0.0, 0.0), lo, eff);
            let vac = product_poisson(mc, md, n_max);
            one.iter().zip(&vac).map(|(a, b)| s * a + (1.0 - s) * b).collect()
        }
        StatePrep::Fock(n) => return Err(Error::UnsupportedPrep(format!("fock:{n}"))),
    })
}

/// Starting cutoff `ceil(mu + 12 sqrt(mu)) + 10` with `mu = eta |beta|^2 / 2`.
pub fn default_cutoff(lo: &LoField, eff: &DetectorEfficiency) -> usize {
    let mu = eff.eta_c.max(eff.eta_d) * lo.magnitude * lo.magnitude / 2.0;
    (mu + 12.0 * mu.sqrt()).ceil() as usize + 10
}

/// Cutoff policy for [`joint_statistics_with`].
#[derive(Debug, Clone, Copy)]
pub struct CutoffPolicy {
    pub n_max: Option<usize>,
    pub tail_tol: f64,
    pub cap: usize,
}

impl Default for CutoffPolicy {
    fn default() -> Self {
        CutoffPolicy {
            n_max: None,
            tail_tol: JOINT_TAIL_TOL,
            cap: DEFAULT_CUTOFF_CAP,
        }
    }
}

/// Joint count statistics with the default cutoff policy.
pub fn joint_statistics(
    prep: &StatePrep,
    lo: &LoField,
    eff: &DetectorEfficiency,
    n_max: Option<usize>,
) -> Result<JointCountDistribution> {
    joint_statistics_with(
        prep,
        lo,
        eff,
        CutoffPolicy {
            n_max,
            ..CutoffPolicy::default()
        },
    )
}

/// Joint count statistics; the cutoff grows until the tail mass falls below
/// `policy.tail_tol`.
pub fn joint_statistics_with(
    prep: &StatePrep,
    lo: &LoField,
    eff: &DetectorEfficiency,
    policy: CutoffPolicy,
) -> Result<JointCountDistribution> {
    prep.validate()?;
    let mut n_max = policy.n_max.unwrap_or_else(|| default_cutoff(lo, eff)).max(1);
    loop {
        if n_max > policy.cap {
            let tail = JointCountDistribution::from_table(policy.cap, table_for(prep, lo, eff, policy.cap)?).tail_mass;
            return Err(Error::CutoffCapExceeded { cap: policy.cap, tail });
        }
        let q = JointCountDistribution::from_table(n_max, table_for(prep, lo, eff, n_max)?);
        if q.tail_mass < policy.tail_tol {
            return Ok(q);
        }
        n_max = n_max + n_max / 2 + 8;
    }
}

/// Distribution of the count difference `Delta = n - m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HlDistribution {
    pub min_delta: i64,
    pub probs: Vec<f64>,
    pub tail_mass: f64,
}

impl HlDistribution {
    pub fn max_delta(&self) -> i64 {
        self.min_delta + self.probs.len() as i64 - 1
    }

    pub fn pmf(&self, delta: i64) -> f64 {
        let i = delta - self.min_delta;
        if i < 0 || i as usize >= self.probs.len() {
            0.0
        } else {
            self.probs[i as usize]
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.probs.iter().enumerate().map(move |(i, &p)| (self.min_delta + i as i64, p))
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(d, p)| d as f64 * p).sum::<f64>() / self.total()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.iter().map(|(d, p)| (d as f64 - mu).powi(2) * p).sum::<f64>() / self.total()
    }
}

/// `p(Delta) = sum_k q(Delta + k, k)` for `Delta >= 0`, `sum_k q(k, k - Delta)` otherwise.
pub fn hl_distribution(q: &JointCountDistribution) -> HlDistribution {
    let n_max = q.n_max() as i64;
    let probs = (-n_max..=n_max)
        .map(|delta| {
            if delta >= 0 {
                (0..=n_max - delta).map(|k| q.get((delta + k) as usize, k as usize)).sum()
            } else {
                (0..=n_max + delta).map(|k| q.get(k as usize, (k - delta) as usize)).sum()
            }
        })
        .collect();
    HlDistribution {
        min_delta: -n_max,
        probs,
        tail_mass: q.tail_mass(),
    }
}
