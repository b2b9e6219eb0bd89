//! Truncated Fock-space states and comparison metrics.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest truncation tail accepted by [`build_state`].
pub const MAX_TRUNCATION_TAIL: f64 = 1e-10;

const HERMITIAN_TOL: f64 = 1e-9;

/// Declarative description of the signal state.
///
/// Textual form (used by configuration files): `coherent:RE[,IM]`, `phav:MODULUS`,
/// `fock:N`, `attfock1:ETA`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StatePrep {
    Coherent(Complex64),
    /// Phase-averaged coherent state with the given modulus.
    Phav(f64),
    /// Number state, `n` in {0, 1}.
    Fock(u32),
    /// `eta |1><1| + (1 - eta) |0><0|`.
    AttenuatedFock1(f64),
}

impl StatePrep {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StatePrep::Coherent(a) if !(a.re.is_finite() && a.im.is_finite()) => {
                Err(Error::InvalidParameter(format!("coherent amplitude {a}")))
            }
            StatePrep::Phav(r) if !(r.is_finite() && r >= 0.0) => {
                Err(Error::InvalidParameter(format!("phav modulus {r}")))
            }
            StatePrep::Fock(n) if n > 1 => Err(Error::UnsupportedPrep(format!("fock:{n}"))),
            StatePrep::AttenuatedFock1(eta) if !(eta > 0.0 && eta <= 1.0) => {
                Err(Error::InvalidParameter(format!("attenuation {eta} outside (0,1]")))
            }
            _ => Ok(()),
        }
    }

    /// True when the state's quadrature statistics depend on the LO phase.
    pub fn is_phase_sensitive(&self) -> bool {
        matches!(self, StatePrep::Coherent(a) if a.norm() > 0.0)
    }
}

impl fmt::Display for StatePrep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatePrep::Coherent(a) if a.im == 0.0 => write!(f, "coherent:{}", a.re),
            StatePrep::Coherent(a) => write!(f, "coherent:{},{}", a.re, a.im),
            StatePrep::Phav(r) => write!(f, "phav:{r}"),
            StatePrep::Fock(n) => write!(f, "fock:{n}"),
            StatePrep::AttenuatedFock1(eta) => write!(f, "attfock1:{eta}"),
        }
    }
}

impl FromStr for StatePrep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("cannot parse state preparation '{s}'"));
        let (kind, args) = s.trim().split_once(':').ok_or_else(bad)?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        let prep = match (kind.to_ascii_lowercase().as_str(), nums.as_slice()) {
            ("coherent", [re]) => StatePrep::Coherent(Complex64::new(*re, 0.0)),
            ("coherent", [re, im]) => StatePrep::Coherent(Complex64::new(*re, *im)),
            ("phav", [r]) => StatePrep::Phav(*r),
            ("fock", [n]) if n.fract() == 0.0 && *n >= 0.0 => StatePrep::Fock(*n as u32),
            ("attfock1", [eta]) => StatePrep::AttenuatedFock1(*eta),
            _ => return Err(bad()),
        };
        prep.validate()?;
        Ok(prep)
    }
}

impl Serialize for StatePrep {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StatePrep {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Truncated density matrix in the photon-number basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FockMatrix(DMatrix<Complex64>);

impl FockMatrix {
    pub fn zeros(dim: usize) -> Self {
        FockMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn from_matrix(m: DMatrix<Complex64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(m.nrows(), m.ncols()));
        }
        Ok(FockMatrix(m))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = DMatrix::zeros(diag.len(), diag.len());
        for (i, &p) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(p, 0.0);
        }
        FockMatrix(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, n: usize, m: usize) -> Complex64 {
        self.0[(n, m)]
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.diagonal().iter().map(|z| z.re).sum()
    }

    /// `(rho + rho^dagger) / 2`
    pub fn hermitize(&self) -> Self {
        FockMatrix((&self.0 + self.0.adjoint()) * Complex64::new(0.5, 0.0))
    }

    /// Largest `|rho_nm - conj(rho_mn)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for n in 0..d {
            for m in 0..=n {
                worst = worst.max((self.0[(n, m)] - self.0[(m, n)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        let d = self.dim();
        (0..d).all(|n| (0..d).all(|m| n == m || self.0[(n, m)].norm() <= tol))
    }

    pub fn photon_numbers(&self) -> PhotonNumberDistribution {
        PhotonNumberDistribution::new(self.0.diagonal().iter().map(|z| z.re).collect())
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.hermitize().0).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Projection onto the physical states: negative eigenvalues set to zero,
    /// then unit trace.
    pub fn clipped(&self) -> Self {
        let eig = SymmetricEigen::new(self.hermitize().0);
        let kept: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
        let total: f64 = kept.iter().sum();
        let scale = if total > 0.0 { 1.0 / total } else { 0.0 };
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        for (k, &l) in kept.iter().enumerate() {
            if l == 0.0 {
                continue;
            }
            let v = eig.eigenvectors.column(k);
            out += v * v.adjoint() * Complex64::new(l * scale, 0.0);
        }
        FockMatrix(out)
    }
}

/// Photon-number probabilities, clamped to be non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonNumberDistribution {
    pub probs: Vec<f64>,
}

impl PhotonNumberDistribution {
    pub fn new(probs: Vec<f64>) -> Self {
        PhotonNumberDistribution {
            probs: probs.into_iter().map(|p| p.max(0.0)).collect(),
        }
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }
}

fn poisson_terms(mean: f64, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    let mut p = (-mean).exp();
    for n in 0..count {
        out.push(p);
        p *= mean / (n as f64 + 1.0);
    }
    out
}

/// Probability mass the truncation at `dim` discards for `prep`.
pub fn truncation_tail(prep: &StatePrep, dim: usize) -> f64 {
    let mean = match *prep {
        StatePrep::Coherent(a) => a.norm_sqr(),
        StatePrep::Phav(r) => r * r,
        StatePrep::Fock(n) => return if (n as usize) < dim { 0.0 } else { 1.0 },
        StatePrep::AttenuatedFock1(_) => return if dim >= 2 { 0.0 } else { 1.0 },
    };
    if mean == 0.0 {
        return if dim == 0 { 1.0 } else { 0.0 };
    }
    // Sum the Poisson tail from `dim` upward until the terms stop mattering.
    let mut term = (-mean + dim as f64 * mean.ln() - ln_factorial(dim)).exp();
    let mut tail = 0.0;
    let mut n = dim;
    loop {
        tail += term;
        n += 1;
        term *= mean / n as f64;
        if (n as f64) > mean && term < tail * 1e-17 {
            break;
        }
    }
    tail
}

pub(crate) fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Builds the truncated density matrix of `prep`.
pub fn build_state(prep: &StatePrep, dim: usize) -> Result<FockMatrix> {
    prep.validate()?;
    if dim < 2 {
        return Err(Error::InvalidParameter(format!("dim {dim} < 2")));
    }
    let tail = truncation_tail(prep, dim);
    if tail > MAX_TRUNCATION_TAIL {
        return Err(Error::CutoffTooSmall {
            dim,
            tail,
            bound: MAX_TRUNCATION_TAIL,
        });
    }
    Ok(match *prep {
        StatePrep::Coherent(alpha) => {
            let half = (-0.5 * alpha.norm_sqr()).exp();
            let mut amp = Vec::with_capacity(dim);
            let mut c = Complex64::new(half, 0.0);
            for n in 0..dim {
                amp.push(c);
                c *= alpha / (n as f64 + 1.0).sqrt();
            }
            let v = nalgebra::DVector::from_vec(amp);
            FockMatrix(&v * v.adjoint())
        }
        StatePrep::Phav(r) => FockMatrix::from_diagonal(&poisson_terms(r * r, dim)),
        StatePrep::Fock(n) => {
            let mut diag = vec![0.0; dim];
            diag[n as usize] = 1.0;
            FockMatrix::from_diagonal(&diag)
        }
        StatePrep::AttenuatedFock1(eta) => {
            let mut diag = vec![0.0; dim];
            diag[0] = 1.0 - eta;
            diag[1] = eta;
            FockMatrix::from_diagonal(&diag)
        }
    })
}

/// Restriction of `prep` to the lowest `dim` levels. Unlike [`build_state`] the
/// discarded tail may be large; it is returned alongside.
pub fn projected_state(prep: &StatePrep, dim: usize) -> Result<(FockMatrix, f64)> {
    prep.validate()?;
    if dim < 2 {
        return Err(Error::InvalidParameter(format!("dim {dim} < 2")));
    }
    let mut full = dim;
    while truncation_tail(prep, full) > MAX_TRUNCATION_TAIL {
        full += 8;
    }
    let rho = build_state(prep, full)?;
    let sub = rho.0.view((0, 0), (dim, dim)).into_owned();
    Ok((FockMatrix(sub), truncation_tail(prep, dim)))
}

fn check_pair(rho: &FockMatrix, sigma: &FockMatrix) -> Result<()> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch(rho.dim(), sigma.dim()));
    }
    for m in [rho, sigma] {
        let defect = m.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            return Err(Error::NonHermitian(defect));
        }
    }
    Ok(())
}

fn uhlmann(rho: &DMatrix<Complex64>, sigma: &DMatrix<Complex64>) -> f64 {
    let eig = SymmetricEigen::new(sigma.clone());
    let d = sigma.nrows();
    let mut sqrt_sigma = DMatrix::zeros(d, d);
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l > 0.0 {
            let v = eig.eigenvectors.column(k);
            sqrt_sigma += v * v.adjoint() * Complex64::new(l.sqrt(), 0.0);
        }
    }
    let inner = &sqrt_sigma * rho * &sqrt_sigma;
    let inner = (&inner + inner.adjoint()) * Complex64::new(0.5, 0.0);
    let root_sum: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0).sqrt())
        .sum();
    root_sum * root_sum
}

/// Uhlmann fidelity `(Tr sqrt(sqrt(sigma) rho sqrt(sigma)))^2` after projecting
/// both arguments onto physical states (negative eigenvalues clipped, trace 1).
pub fn fidelity(rho: &FockMatrix, sigma: &FockMatrix) -> Result<f64> {
    check_pair(rho, sigma)?;
    Ok(uhlmann(&rho.clipped().0, &sigma.clipped().0))
}

/// Fidelity on the matrices as given (Hermitian parts, no clipping or renormalization).
pub fn raw_fidelity(rho: &FockMatrix, sigma: &FockMatrix) -> Result<f64> {
    check_pair(rho, sigma)?;
    Ok(uhlmann(&rho.hermitize().0, &sigma.hermitize().0))
}

/// `sum_n n Re(rho_nn)`
pub fn mean_photon_number(rho: &FockMatrix) -> f64 {
    rho.0.diagonal().iter().enumerate().map(|(n, z)| n as f64 * z.re).sum()
}

/// Truncated quadrature operator `(a e^{-i theta} + a^dagger e^{i theta}) / sqrt(2)`.
pub fn quadrature_operator(dim: usize, theta: f64) -> DMatrix<Complex64> {
    let mut x = DMatrix::zeros(dim, dim);
    let phase = Complex64::from_polar(1.0, theta);
    for n in 0..dim.saturating_sub(1) {
        let c = ((n as f64 + 1.0) / 2.0).sqrt();
        // <n+1| a^dagger |n> = sqrt(n+1)
        x[(n + 1, n)] = phase * c;
        x[(n, n + 1)] = phase.conj() * c;
    }
    x
}

/// Mean and variance of the quadrature at angle `theta` computed in the truncated space.
pub fn quadrature_moments(rho: &FockMatrix, theta: f64) -> (f64, f64) {
    let x = quadrature_operator(rho.dim(), theta);
    let mean = (rho.matrix() * &x).trace().re;
    let second = (rho.matrix() * &x * &x).trace().re;
    (mean, second - mean * mean)
}
