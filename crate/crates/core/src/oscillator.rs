//! Harmonic-oscillator eigenfunctions in the quadrature representation.
//!
//! Convention: vacuum quadrature variance 1/2, so `psi_0(x) = pi^(-1/4) exp(-x^2/2)`
//! and `psi_n'' = (x^2 - 2n - 1) psi_n`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Default largest order for a Fock cutoff `dim`.
pub fn default_max_order(dim: usize) -> usize {
    2 * dim + 2
}

/// `psi_n(x)` via the upward three-term recurrence
/// `psi_{k+1} = sqrt(2/(k+1)) x psi_k - sqrt(k/(k+1)) psi_{k-1}`.
pub fn oscillator_wavefunction(n: usize, x: f64, max_order: usize) -> Result<f64> {
    if n > max_order {
        return Err(Error::OrderOverflow {
            order: n,
            max: max_order,
        });
    }
    if !x.is_finite() {
        return Err(Error::Domain(format!("wavefunction argument {x}")));
    }
    let mut out = vec![0.0; n + 1];
    fill_wavefunctions(x, &mut out);
    Ok(out[n])
}

/// Writes `psi_0(x) .. psi_{len-1}(x)` into `out`.
pub(crate) fn fill_wavefunctions(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = PI.powf(-0.25) * (-0.5 * x * x).exp();
    if out.len() > 1 {
        out[1] = std::f64::consts::SQRT_2 * x * out[0];
    }
    for k in 1..out.len().saturating_sub(1) {
        let kf = k as f64;
        out[k + 1] = (2.0 / (kf + 1.0)).sqrt() * x * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
    }
}

/// Derivative `psi_n'(x) = sqrt(n/2) psi_{n-1} - sqrt((n+1)/2) psi_{n+1}`,
/// given a slice holding at least `psi_0 .. psi_{n+1}`.
pub(crate) fn wavefunction_derivative(psi: &[f64], n: usize) -> f64 {
    let up = ((n as f64 + 1.0) / 2.0).sqrt() * psi[n + 1];
    if n == 0 {
        -up
    } else {
        (n as f64 / 2.0).sqrt() * psi[n - 1] - up
    }
}
