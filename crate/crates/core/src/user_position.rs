//! MM update of each user's antenna position.
//!
//! For fixed `W`, `u`, `v` and BS positions, user `k`'s part of the WMMSE
//! objective is `α_k v_k (gᴴC_k g + Re(d_kᴴ g)) + const` with
//! `g = g_k(r_k)`. Users do not interact, so every user is updated
//! independently with a projected closed-form step.

use nalgebra::{DMatrix, DVector};

use crate::beamforming::BeamformerState;
use crate::channel::{field_response_matrix, PositionState, Scenario, C64};
use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};
use crate::mm::{linear_form, majorize, quadratic_form, MajorizerBound, QuadraticModel};

#[derive(Debug, Clone, PartialEq)]
pub struct UserSurrogate {
    pub c: DMatrix<C64>,
    pub d: DVector<C64>,
    pub d_hat: DVector<C64>,
    pub grad_z: Point,
    pub curvature: f64,
    pub expansion: Point,
}

impl UserSurrogate {
    pub fn model(&self) -> QuadraticModel {
        QuadraticModel {
            expansion: self.expansion,
            gradient: self.grad_z,
            curvature: self.curvature,
        }
    }
}

/// `C_k = Σ_j |u_k|² q_j q_jᴴ` and `d_k = −2 u_k* q_k`, where
/// `q_j = Σ_kᴴ F_k(t) w_j`.
pub fn build_user_coefficients(
    k: usize,
    scenario: &Scenario,
    positions: &PositionState,
    bf: &BeamformerState,
) -> Result<(DMatrix<C64>, DVector<C64>)> {
    let paths = scenario
        .paths
        .get(k)
        .ok_or_else(|| Error::Shape(format!("no path set for user {k}")))?;
    if bf.w.nrows() != positions.bs.len() || k >= bf.w.ncols() || k >= bf.u.len() {
        return Err(Error::Shape(format!(
            "W is {}×{} with {} BS positions; user {k}",
            bf.w.nrows(),
            bf.w.ncols(),
            positions.bs.len()
        )));
    }
    let f = field_response_matrix(&positions.bs, paths, scenario.config.wavelength);
    let q = paths.sigma.ad_mul(&(f * &bf.w));
    let u = bf.u[k];
    let c = &q * q.adjoint() * C64::from(u.norm_sqr());
    let d = q.column(k) * (u.conj() * -2.0);
    Ok((c, d))
}

/// `gᴴCg + Re(dᴴg)` at `r`.
pub fn user_objective(c: &DMatrix<C64>, d: &DVector<C64>, directions: &[Point], r: &Point, lambda: f64) -> f64 {
    let g = crate::channel::field_response(r, directions, lambda);
    quadratic_form(c, &g) + linear_form(d, &g)
}

pub fn build_user_surrogate(
    c: &DMatrix<C64>,
    d: &DVector<C64>,
    directions: &[Point],
    r0: &Point,
    lambda: f64,
    bound: MajorizerBound,
) -> UserSurrogate {
    let (d_hat, model) = majorize(c, d, directions, r0, lambda, bound);
    UserSurrogate {
        c: c.clone(),
        d: d.clone(),
        d_hat,
        grad_z: model.gradient,
        curvature: model.curvature,
        expansion: *r0,
    }
}

/// `Π_region(r0 − ∇z / ((8π²/λ²)‖d̂‖₁))`; a flat surrogate keeps `r0`.
pub fn update_user_position(surrogate: &UserSurrogate, region: &Rect) -> Point {
    match surrogate.model().minimizer() {
        Some(p) => region.project(&p),
        None => surrogate.expansion,
    }
}

/// Build and apply the MM step for user `k` at the current state.
pub fn step_user(
    k: usize,
    scenario: &Scenario,
    positions: &PositionState,
    bf: &BeamformerState,
    bound: MajorizerBound,
) -> Result<Point> {
    let (c, d) = build_user_coefficients(k, scenario, positions, bf)?;
    let s = build_user_surrogate(
        &c,
        &d,
        &scenario.paths[k].n_r,
        &positions.users[k],
        scenario.config.wavelength,
        bound,
    );
    Ok(update_user_position(&s, &scenario.config.rx_regions.get(k)))
}
