//! WMMSE beamforming block: receive scalars, MSE weights and transmit
//! beamformers, plus SINR / MSE / objective evaluation.
//!
//! Channels are passed as an `M × K` matrix `H` whose column `k` is `h_k`;
//! beamformers as an `M × K` matrix `W` whose column `k` is `w_k`. All rates
//! are in nats.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::channel::C64;
use crate::error::{Error, Result};

/// Relative accuracy at which the power bisection stops.
pub const POWER_REL_TOL: f64 = 1e-6;
pub const BISECTION_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformerState {
    pub w: DMatrix<C64>,
    pub u: DVector<C64>,
    pub v: DVector<f64>,
}

impl BeamformerState {
    /// Total transmit power `Σ_k ‖w_k‖²`.
    pub fn power(&self) -> f64 {
        self.w.norm_squared()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkMetrics {
    pub gamma: DVector<f64>,
    pub e: DVector<f64>,
    pub wsr: f64,
    pub obj: f64,
}

/// `G[k, j] = h_kᴴ w_j`.
fn cross_gains(h: &DMatrix<C64>, w: &DMatrix<C64>) -> DMatrix<C64> {
    h.ad_mul(w)
}

pub fn sinr(h: &DMatrix<C64>, w: &DMatrix<C64>, sigma2: f64) -> DVector<f64> {
    let g = cross_gains(h, w);
    DVector::from_fn(g.nrows(), |k, _| {
        let total: f64 = g.row(k).iter().map(|z| z.norm_sqr()).sum();
        let signal = g[(k, k)].norm_sqr();
        signal / (total - signal + sigma2)
    })
}

/// `Σ_k α_k ln(1 + γ_k)`.
pub fn wsr(gamma: &DVector<f64>, alpha: &[f64]) -> f64 {
    gamma.iter().zip(alpha).map(|(g, a)| a * g.ln_1p()).sum()
}

/// MSE of user `k` with receive scalar `u_k`:
/// `1 + |u_k|²(σ² + Σ_j |h_kᴴw_j|²) − 2 Re(u_k* h_kᴴ w_k)`.
pub fn mse(h: &DMatrix<C64>, w: &DMatrix<C64>, k: usize, u_k: C64, sigma2: f64) -> f64 {
    let g = h.column(k).ad_mul(w);
    let total: f64 = g.iter().map(|z| z.norm_sqr()).sum();
    1.0 + u_k.norm_sqr() * (sigma2 + total) - 2.0 * (u_k.conj() * g[k]).re
}

pub fn mse_all(h: &DMatrix<C64>, w: &DMatrix<C64>, u: &DVector<C64>, sigma2: f64) -> DVector<f64> {
    DVector::from_fn(u.len(), |k, _| mse(h, w, k, u[k], sigma2))
}

/// `Σ_k α_k (v_k e_k − ln v_k)`.
pub fn wmmse_objective(e: &DVector<f64>, alpha: &[f64], v: &DVector<f64>) -> f64 {
    e.iter()
        .zip(v.iter())
        .zip(alpha)
        .map(|((e, v), a)| a * (v * e - v.ln()))
        .sum()
}

/// MMSE receive scalars `u_k = h_kᴴw_k / (Σ_i |h_kᴴw_i|² + σ²)`.
pub fn update_u(h: &DMatrix<C64>, w: &DMatrix<C64>, sigma2: f64) -> DVector<C64> {
    let g = cross_gains(h, w);
    DVector::from_fn(g.nrows(), |k, _| {
        let total: f64 = g.row(k).iter().map(|z| z.norm_sqr()).sum();
        g[(k, k)] / (total + sigma2)
    })
}

/// MSE weights `v_k = 1/e_k`.
///
/// With MMSE `u_k` this equals `(1 − u_k* h_kᴴ w_k)⁻¹ = 1 + γ_k`; for any
/// other `u_k` it is still the exact minimizer of `v e_k − ln v`.
pub fn update_v(h: &DMatrix<C64>, w: &DMatrix<C64>, u: &DVector<C64>, sigma2: f64) -> Result<DVector<f64>> {
    let e = mse_all(h, w, u, sigma2);
    if let Some((k, bad)) = e.iter().enumerate().find(|(_, e)| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::Numerical(format!(
            "MSE of user {k} is {bad}; weight update undefined"
        )));
    }
    Ok(e.map(|e| 1.0 / e))
}

/// Beamformers from the power-constrained WMMSE step and the dual variable
/// that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub w: DMatrix<C64>,
    pub mu: f64,
}

/// Spectral form of `w_k(μ) = α_k u_k v_k (μI + Φ)⁺ h_k`, with
/// `Φ = Σ_i α_i |u_i|² v_i h_i h_iᴴ`.
struct DualPencil {
    basis: DMatrix<C64>,
    eigenvalues: DVector<f64>,
    /// `Uᴴ B`, where column `k` of `B` is `α_k u_k v_k h_k`.
    projected: DMatrix<C64>,
    row_power: DVector<f64>,
    null_threshold: f64,
}

impl DualPencil {
    fn new(h: &DMatrix<C64>, u: &DVector<C64>, v: &DVector<f64>, alpha: &[f64]) -> Self {
        let m = h.nrows();
        let mut phi = DMatrix::<C64>::zeros(m, m);
        let mut rhs = DMatrix::<C64>::zeros(m, h.ncols());
        for k in 0..h.ncols() {
            let hk = h.column(k);
            let weight = alpha[k] * u[k].norm_sqr() * v[k];
            if weight != 0.0 {
                phi.gerc(C64::from(weight), &hk, &hk, C64::from(1.0));
            }
            rhs.set_column(k, &(hk * (u[k] * (alpha[k] * v[k]))));
        }
        // Symmetrize against rounding before the Hermitian solver.
        let phi = (&phi + phi.adjoint()) * C64::from(0.5);
        let eig = SymmetricEigen::new(phi);
        let eigenvalues = eig.eigenvalues.map(|l| l.max(0.0));
        let projected = eig.eigenvectors.ad_mul(&rhs);
        let row_power = DVector::from_fn(m, |i, _| projected.row(i).iter().map(|z| z.norm_sqr()).sum());
        let top = eigenvalues.max();
        DualPencil {
            basis: eig.eigenvectors,
            eigenvalues,
            projected,
            row_power,
            null_threshold: 1e-12 * top,
        }
    }

    /// `1/(μ + λ_i)`, with the pseudo-inverse convention on the null space
    /// at `μ = 0`.
    fn inverse(&self, mu: f64, lambda: f64) -> f64 {
        if mu == 0.0 && lambda <= self.null_threshold {
            0.0
        } else {
            1.0 / (mu + lambda)
        }
    }

    fn power(&self, mu: f64) -> f64 {
        self.row_power
            .iter()
            .zip(self.eigenvalues.iter())
            .map(|(p, &l)| p * self.inverse(mu, l).powi(2))
            .sum()
    }

    fn beamformers(&self, mu: f64) -> DMatrix<C64> {
        let mut scaled = self.projected.clone();
        for (i, &l) in self.eigenvalues.iter().enumerate() {
            let s = self.inverse(mu, l);
            scaled.row_mut(i).scale_mut(s);
        }
        &self.basis * scaled
    }
}

/// Transmit power as a function of the dual variable, for inspection.
pub fn power_at_dual(h: &DMatrix<C64>, u: &DVector<C64>, v: &DVector<f64>, alpha: &[f64], mu: f64) -> f64 {
    DualPencil::new(h, u, v, alpha).power(mu)
}

/// Power-constrained WMMSE beamformer update.
///
/// `μ = 0` when the (pseudo-inverse) solution already meets `P_max`;
/// otherwise `μ` is found by bisection on `Σ_k ‖w_k(μ)‖² = P_max`. The
/// upper bracket grows geometrically from 1; bisection stops once the power
/// lies in `[P_max(1 − 1e-6), P_max]` or after 100 halvings, always on the
/// feasible side.
pub fn update_w(
    h: &DMatrix<C64>,
    u: &DVector<C64>,
    v: &DVector<f64>,
    alpha: &[f64],
    p_max: f64,
) -> Result<PowerAllocation> {
    if v.iter().any(|v| v.is_nan() || *v <= 0.0) {
        return Err(Error::Numerical("MSE weights must be positive".into()));
    }
    let pencil = DualPencil::new(h, u, v, alpha);
    let p0 = pencil.power(0.0);
    if !p0.is_finite() {
        return Err(Error::Numerical("beamformer power is not finite".into()));
    }
    if p0 <= p_max {
        return Ok(PowerAllocation {
            w: pencil.beamformers(0.0),
            mu: 0.0,
        });
    }
    let mut hi = 1.0;
    let mut doublings = 0;
    while pencil.power(hi) >= p_max {
        hi *= 2.0;
        doublings += 1;
        if doublings > 2000 || !hi.is_finite() {
            return Err(Error::Numerical("power bisection failed to bracket".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..BISECTION_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        let p = pencil.power(mid);
        if p > p_max {
            lo = mid;
        } else {
            hi = mid;
            if p >= p_max * (1.0 - POWER_REL_TOL) {
                break;
            }
        }
    }
    Ok(PowerAllocation {
        w: pencil.beamformers(hi),
        mu: hi,
    })
}

/// Maximum-ratio transmission at full power split evenly across users.
pub fn initial_beamformers(h: &DMatrix<C64>, p_max: f64) -> DMatrix<C64> {
    let (m, k) = h.shape();
    let scale = (p_max / k as f64).sqrt();
    let mut w = DMatrix::zeros(m, k);
    for j in 0..k {
        let col = h.column(j);
        let n = col.norm();
        if n > 0.0 {
            w.set_column(j, &(col * C64::from(scale / n)));
        } else {
            w[(0, j)] = C64::from(scale);
        }
    }
    w
}

/// One full WMMSE pass `u → v → W`.
pub fn wmmse_step(
    h: &DMatrix<C64>,
    w: &DMatrix<C64>,
    alpha: &[f64],
    sigma2: f64,
    p_max: f64,
) -> Result<BeamformerState> {
    let u = update_u(h, w, sigma2);
    let v = update_v(h, w, &u, sigma2)?;
    let w = update_w(h, &u, &v, alpha, p_max)?.w;
    Ok(BeamformerState { w, u, v })
}

pub fn link_metrics(h: &DMatrix<C64>, state: &BeamformerState, alpha: &[f64], sigma2: f64) -> LinkMetrics {
    let gamma = sinr(h, &state.w, sigma2);
    let e = mse_all(h, &state.w, &state.u, sigma2);
    LinkMetrics {
        wsr: wsr(&gamma, alpha),
        obj: wmmse_objective(&e, alpha, &state.v),
        gamma,
        e,
    }
}
