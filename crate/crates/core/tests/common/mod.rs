#![allow(dead_code)]

use std::f64::consts::PI;

use hltomo::detection::{hl_distribution, joint_statistics, DetectorEfficiency, LoField};
use hltomo::fock::{FockMatrix, StatePrep};
use hltomo::pattern::PatternFunctions;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Gamma, Normal};

/// Expected value of the sampling estimator under the exact detection model,
/// averaging over `n_phi` equally spaced LO phases on `[0, pi)`.
pub fn expected_reconstruction(
    prep: &StatePrep,
    lo_magnitude: f64,
    eff: &DetectorEfficiency,
    dim: usize,
    n_phi: usize,
) -> FockMatrix {
    let scale = eff.detected_lo_magnitude(lo_magnitude);
    let n_phi = if prep.is_phase_sensitive() { n_phi } else { 1 };
    let mut rho = DMatrix::<Complex64>::zeros(dim, dim);
    for j in 0..n_phi {
        let phi = j as f64 * PI / n_phi as f64;
        let lo = LoField::new(lo_magnitude, phi).unwrap();
        let p = hl_distribution(&joint_statistics(prep, &lo, eff, None).unwrap());
        let reach = p.max_delta() as f64 / (2f64.sqrt() * scale);
        let table = PatternFunctions::with_bound(dim - 1, reach + 1.0).unwrap();
        for (delta, prob) in p.iter() {
            if prob == 0.0 {
                continue;
            }
            let x = delta as f64 / (2f64.sqrt() * scale);
            for n in 0..dim {
                for m in 0..dim {
                    let f = table.value(n, m, x).unwrap();
                    let rot = if prep.is_phase_sensitive() {
                        Complex64::from_polar(1.0, (n as f64 - m as f64) * phi)
                    } else if n == m {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                    rho[(n, m)] += rot * f * prob / n_phi as f64;
                }
            }
        }
    }
    FockMatrix::from_matrix(rho).unwrap().hermitize()
}

/// Ideal homodyne quadrature samples `(x, phase)` with phases uniform on `[0, pi)`.
pub fn ideal_homodyne(prep: &StatePrep, n: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let vacuum = Normal::new(0.0, 0.5f64.sqrt()).unwrap();
    // |x|^2 for |1> is Gamma(3/2, 1) distributed: p(x) = 2 x^2 e^{-x^2} / sqrt(pi)
    let one = Gamma::new(1.5, 1.0).unwrap();
    (0..n)
        .map(|_| {
            let phase = rng.random::<f64>() * PI;
            let x = match *prep {
                StatePrep::Coherent(a) => {
                    2f64.sqrt() * (a * Complex64::from_polar(1.0, -phase)).re + vacuum.sample(&mut rng)
                }
                StatePrep::Phav(r) => {
                    let theta = rng.random::<f64>() * 2.0 * PI;
                    2f64.sqrt() * r * (theta - phase).cos() + vacuum.sample(&mut rng)
                }
                StatePrep::Fock(0) => vacuum.sample(&mut rng),
                StatePrep::Fock(_) => one_photon(&one, &mut rng),
                StatePrep::AttenuatedFock1(eta) => {
                    if rng.random::<f64>() < eta {
                        one_photon(&one, &mut rng)
                    } else {
                        vacuum.sample(&mut rng)
                    }
                }
            };
            (x, phase)
        })
        .collect()
}

fn one_photon<R: Rng>(g: &Gamma<f64>, rng: &mut R) -> f64 {
    let r = g.sample(rng).sqrt();
    if rng.random::<bool>() {
        r
    } else {
        -r
    }
}

/// Total-variation distance between an empirical histogram and a pmf.
pub fn tv_distance(counts: &std::collections::BTreeMap<i64, usize>, n: usize, pmf: impl Fn(i64) -> f64, support: impl Iterator<Item = i64>) -> f64 {
    let mut seen = std::collections::BTreeSet::new();
    let mut tv = 0.0;
    for d in support {
        seen.insert(d);
        let emp = *counts.get(&d).unwrap_or(&0) as f64 / n as f64;
        tv += (emp - pmf(d)).abs();
    }
    for (d, &c) in counts {
        if !seen.contains(d) {
            tv += c as f64 / n as f64;
        }
    }
    0.5 * tv
}
