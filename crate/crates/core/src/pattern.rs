//! Sampling (pattern) functions for density-matrix reconstruction from
//! quadrature data.
//!
//! The pattern function of the pair `(n, m)` is `f_nm(x) = d/dx [psi_k(x) phi_l(x)]`
//! with `k = min(n, m)` and `l = max(n, m)`, where `psi_l` is the normalizable
//! oscillator eigenfunction and `phi_l` the irregular solution of the same
//! equation with opposite parity and Wronskian `psi_l phi_l' - psi_l' phi_l = 2`.
//! With this normalization the sampling estimator is
//! `rho_nm = < f_nm(x) e^{i(n-m) phi} >` for phases uniform on `[0, pi)`.
//!
//! `psi` comes from the three-term recurrence; `phi` is integrated outward from
//! the origin (RK4) where it is the dominant solution. Values are tabulated
//! for `x >= 0` together with exact first derivatives and interpolated with
//! cubic Hermite polynomials; negative arguments use the parity
//! `f_nm(-x) = (-1)^(n-m) f_nm(x)`.

use crate::error::{Error, Result};
use crate::oscillator::{fill_wavefunctions, wavefunction_derivative};

/// Table node spacing.
const NODE_STEP: f64 = 1.0 / 128.0;
/// RK4 substeps per node interval.
const RK_SUBSTEPS: usize = 32;
const WRONSKIAN: f64 = 2.0;
/// Beyond this the irregular solutions overflow double precision.
const HARD_X_LIMIT: f64 = 30.0;

/// Sanity bound on `|f_nm|` for indices up to `max_index`.
pub fn envelope(max_index: usize) -> f64 {
    4.0 * (max_index as f64 / 9.0).max(1.0).powf(0.25)
}

/// Default tabulation bound `sqrt(2 max_index + 1) + 6`.
pub fn default_x_max(max_index: usize) -> f64 {
    (2.0 * max_index as f64 + 1.0).sqrt() + 6.0
}

/// Read-only table of pattern functions `f_nm`, `n, m <= max_index`.
#[derive(Debug, Clone)]
pub struct PatternFunctions {
    max_index: usize,
    x_max: f64,
    nodes: usize,
    /// Per order: psi, psi', phi, phi' at every node.
    psi: Vec<Vec<f64>>,
    dpsi: Vec<Vec<f64>>,
    phi: Vec<Vec<f64>>,
    dphi: Vec<Vec<f64>>,
}

impl PatternFunctions {
    pub fn new(max_index: usize) -> Result<Self> {
        Self::with_bound(max_index, default_x_max(max_index))
    }

    /// Table covering `|x| <= x_max` (never less than the default bound).
    pub fn with_bound(max_index: usize, x_max: f64) -> Result<Self> {
        let x_max = x_max.max(default_x_max(max_index));
        if !(x_max <= HARD_X_LIMIT) {
            return Err(Error::InvalidParameter(format!(
                "pattern-function range {x_max} exceeds {HARD_X_LIMIT}"
            )));
        }
        let nodes = (x_max / NODE_STEP).ceil() as usize + 1;
        let orders = max_index + 1;

        let mut psi = vec![vec![0.0; nodes]; orders];
        let mut dpsi = vec![vec![0.0; nodes]; orders];
        let mut buf = vec![0.0; orders + 1];
        for i in 0..nodes {
            fill_wavefunctions(i as f64 * NODE_STEP, &mut buf);
            for n in 0..orders {
                psi[n][i] = buf[n];
                dpsi[n][i] = wavefunction_derivative(&buf, n);
            }
        }

        let mut phi = Vec::with_capacity(orders);
        let mut dphi = Vec::with_capacity(orders);
        for n in 0..orders {
            let (y, dy) = integrate_irregular(n, psi[n][0], dpsi[n][0], nodes);
            phi.push(y);
            dphi.push(dy);
        }

        let table = PatternFunctions {
            max_index,
            x_max: (nodes - 1) as f64 * NODE_STEP,
            nodes,
            psi,
            dpsi,
            phi,
            dphi,
        };
        table.check_envelope()?;
        Ok(table)
    }

    pub fn max_index(&self) -> usize {
        self.max_index
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    fn check_envelope(&self) -> Result<()> {
        let bound = envelope(self.max_index);
        for l in 0..=self.max_index {
            for k in 0..=l {
                for i in 0..self.nodes {
                    let (v, _) = self.node_value(k, l, i);
                    if !(v.abs() <= bound) {
                        return Err(Error::Unstable {
                            n: l,
                            m: k,
                            value: v,
                            envelope: bound,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// `f` and `f'` at node `i` for `k <= l`.
    #[inline]
    fn node_value(&self, k: usize, l: usize, i: usize) -> (f64, f64) {
        let x = i as f64 * NODE_STEP;
        let (p, dp) = (self.psi[k][i], self.dpsi[k][i]);
        let (q, dq) = (self.phi[l][i], self.dphi[l][i]);
        let f = dp * q + p * dq;
        // psi'' = (x^2 - 2k - 1) psi and phi'' = (x^2 - 2l - 1) phi
        let df = (2.0 * x * x - 2.0 * (k + l) as f64 - 2.0) * p * q + 2.0 * dp * dq;
        (f, df)
    }

    /// `f_nm(x)`.
    pub fn value(&self, n: usize, m: usize, x: f64) -> Result<f64> {
        let top = n.max(m);
        if top > self.max_index {
            return Err(Error::IndexOverflow {
                index: top,
                max: self.max_index,
            });
        }
        if !x.is_finite() {
            return Err(Error::Domain(format!("pattern-function argument {x}")));
        }
        if x.abs() > self.x_max {
            return Err(Error::OutOfGrid { x, x_max: self.x_max });
        }
        Ok(self.eval(n.min(m), top, x))
    }

    /// All `f_nm(x)` with `m <= n < dim`, packed row by row (`n(n+1)/2 + m`).
    pub fn lower_triangle(&self, dim: usize, x: f64) -> Result<Vec<f64>> {
        if dim == 0 || dim - 1 > self.max_index {
            return Err(Error::IndexOverflow {
                index: dim.saturating_sub(1),
                max: self.max_index,
            });
        }
        if x.abs() > self.x_max || !x.is_finite() {
            return Err(Error::OutOfGrid { x, x_max: self.x_max });
        }
        let mut out = Vec::with_capacity(dim * (dim + 1) / 2);
        for n in 0..dim {
            for m in 0..=n {
                out.push(self.eval(m, n, x));
            }
        }
        Ok(out)
    }

    fn eval(&self, k: usize, l: usize, x: f64) -> f64 {
        let sign = if x < 0.0 && (l - k) % 2 == 1 { -1.0 } else { 1.0 };
        let t = x.abs() / NODE_STEP;
        let i = (t.floor() as usize).min(self.nodes - 2);
        let s = t - i as f64;
        let (f0, d0) = self.node_value(k, l, i);
        let (f1, d1) = self.node_value(k, l, i + 1);
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        sign * (h00 * f0 + h10 * NODE_STEP * d0 + h01 * f1 + h11 * NODE_STEP * d1)
    }
}

/// Irregular solution of `y'' = (x^2 - 2n - 1) y` with parity opposite to
/// `psi_n`, sampled at the table nodes together with its derivative.
fn integrate_irregular(n: usize, psi0: f64, dpsi0: f64, nodes: usize) -> (Vec<f64>, Vec<f64>) {
    // W = psi phi' - psi' phi evaluated at the origin fixes the free constant.
    let (mut y, mut dy) = if n.is_multiple_of(2) {
        (0.0, WRONSKIAN / psi0)
    } else {
        (-WRONSKIAN / dpsi0, 0.0)
    };
    let energy = 2.0 * n as f64 + 1.0;
    let accel = |x: f64, y: f64| (x * x - energy) * y;
    let h = NODE_STEP / RK_SUBSTEPS as f64;

    let mut ys = Vec::with_capacity(nodes);
    let mut dys = Vec::with_capacity(nodes);
    ys.push(y);
    dys.push(dy);
    for i in 1..nodes {
        let x0 = (i - 1) as f64 * NODE_STEP;
        for j in 0..RK_SUBSTEPS {
            let x = x0 + j as f64 * h;
            let k1y = dy;
            let k1v = accel(x, y);
            let k2y = dy + 0.5 * h * k1v;
            let k2v = accel(x + 0.5 * h, y + 0.5 * h * k1y);
            let k3y = dy + 0.5 * h * k2v;
            let k3v = accel(x + 0.5 * h, y + 0.5 * h * k2y);
            let k4y = dy + h * k3v;
            let k4v = accel(x + h, y + h * k3y);
            y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
            dy += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        }
        ys.push(y);
        dys.push(dy);
    }
    (ys, dys)
}
