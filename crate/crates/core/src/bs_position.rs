//! MM update of the BS antenna positions.
//!
//! With beamformers, receive scalars, weights, user positions and all other
//! BS antennas fixed, the WMMSE objective restricted to antenna `m` is
//! `Σ_k fᴴA_{k,m}f + Re(b_{k,m}ᴴ f)` with `f = f_k(t_m)`, up to a constant.
//! Each step minimizes an isotropic quadratic majorizer of that function,
//! either over the whole region under linearized spacing constraints (a 2-D
//! QP) or over the antenna's own cell (a clamp).

use nalgebra::{DMatrix, DVector};

use crate::beamforming::BeamformerState;
use crate::channel::{field_response_tx, path_gain_vector, PositionState, Scenario, C64};
use crate::error::{Error, Result};
use crate::geometry::{Halfspace, Point, Rect};
use crate::mm::{linear_form, majorize, quadratic_form, MajorizerBound, QuadraticModel};
use crate::qp::{self, QpProblem, QpSolution};

/// Majorizer of one user's term of the antenna-`m` subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionSurrogate {
    pub a: DMatrix<C64>,
    pub b: DVector<C64>,
    pub b_hat: DVector<C64>,
    pub grad_z: Point,
    /// Coefficient of `‖t_m‖²`: `(4π²/λ²)‖b̂‖₁`.
    pub curvature: f64,
    pub expansion: Point,
}

impl PositionSurrogate {
    pub fn model(&self) -> QuadraticModel {
        QuadraticModel {
            expansion: self.expansion,
            gradient: self.grad_z,
            curvature: self.curvature,
        }
    }
}

fn check_shapes(
    k: usize,
    m: usize,
    scenario: &Scenario,
    positions: &PositionState,
    bf: &BeamformerState,
) -> Result<()> {
    let (big_m, big_k) = bf.w.shape();
    if positions.bs.len() != big_m || positions.users.len() != big_k || scenario.paths.len() != big_k {
        return Err(Error::Shape(format!(
            "W is {big_m}×{big_k}, {} BS positions, {} user positions, {} path sets",
            positions.bs.len(),
            positions.users.len(),
            scenario.paths.len()
        )));
    }
    if k >= big_k || m >= big_m || bf.u.len() != big_k || bf.v.len() != big_k {
        return Err(Error::Shape(format!("index (k={k}, m={m}) or u/v length out of range")));
    }
    Ok(())
}

/// Coefficients `(A_{k,m}, b_{k,m})` of user `k`'s term:
///
/// ```text
/// A = α_k v_k |u_k|² ‖w_{m,:}‖² a aᴴ,           a = Σ_k g_k(r_k)
/// b = 2 α_k v_k ( |u_k|² Σ_j w*_{m,j} Σ_{n≠m} w_{n,j} aᴴf_k(t_n) − u_k w*_{m,k} ) a
/// ```
pub fn build_coefficients(
    k: usize,
    m: usize,
    scenario: &Scenario,
    positions: &PositionState,
    bf: &BeamformerState,
) -> Result<(DMatrix<C64>, DVector<C64>)> {
    check_shapes(k, m, scenario, positions, bf)?;
    let lambda = scenario.config.wavelength;
    let alpha = scenario.config.weights.get(k);
    let paths = &scenario.paths[k];
    let a = path_gain_vector(&positions.users[k], paths, lambda);
    let (u, v) = (bf.u[k], bf.v[k]);
    let w = &bf.w;
    let row_power: f64 = w.row(m).iter().map(|z| z.norm_sqr()).sum();

    let big_a = &a * a.adjoint() * C64::from(alpha * v * u.norm_sqr() * row_power);

    // aᴴ f_k(t_n) for every other antenna.
    let others: Vec<(usize, C64)> = positions
        .bs
        .iter()
        .enumerate()
        .filter(|(n, _)| *n != m)
        .map(|(n, t)| (n, a.dotc(&field_response_tx(t, paths, lambda))))
        .collect();
    let mut interference = C64::new(0.0, 0.0);
    for j in 0..w.ncols() {
        let cross: C64 = others.iter().map(|(n, s)| w[(*n, j)] * s).sum();
        interference += w[(m, j)].conj() * cross;
    }
    let inner = interference * u.norm_sqr() - u * w[(m, k)].conj();
    let b = &a * (inner * (2.0 * alpha * v));
    Ok((big_a, b))
}

/// Majorizer of `fᴴAf + Re(bᴴf)` at `t0`. `b̂ = 2(A − tr(A)·I)f(t0) + b`
/// (for the rank-one `A` here, `tr(A) = λ_max(A)`).
pub fn build_surrogate(
    a: &DMatrix<C64>,
    b: &DVector<C64>,
    directions: &[Point],
    t0: &Point,
    lambda: f64,
    bound: MajorizerBound,
) -> PositionSurrogate {
    let (b_hat, model) = majorize(a, b, directions, t0, lambda, bound);
    PositionSurrogate {
        a: a.clone(),
        b: b.clone(),
        b_hat,
        grad_z: model.gradient,
        curvature: model.curvature,
        expansion: *t0,
    }
}

/// The single-antenna subproblem for antenna `m`, frozen at the current
/// state of everything else.
#[derive(Debug, Clone)]
pub struct AntennaSubproblem {
    pub m: usize,
    pub lambda: f64,
    terms: Vec<(DMatrix<C64>, DVector<C64>)>,
    directions: Vec<Vec<Point>>,
}

impl AntennaSubproblem {
    pub fn new(m: usize, scenario: &Scenario, positions: &PositionState, bf: &BeamformerState) -> Result<Self> {
        let terms = (0..scenario.paths.len())
            .map(|k| build_coefficients(k, m, scenario, positions, bf))
            .collect::<Result<Vec<_>>>()?;
        Ok(AntennaSubproblem {
            m,
            lambda: scenario.config.wavelength,
            terms,
            directions: scenario.paths.iter().map(|p| p.n_t.clone()).collect(),
        })
    }

    pub fn coefficients(&self, k: usize) -> (&DMatrix<C64>, &DVector<C64>) {
        let (a, b) = &self.terms[k];
        (a, b)
    }

    /// `Σ_k f_k(t)ᴴ A_k f_k(t) + Re(b_kᴴ f_k(t))`.
    pub fn value(&self, t: &Point) -> f64 {
        self.terms
            .iter()
            .zip(&self.directions)
            .map(|((a, b), dirs)| {
                let f = crate::channel::field_response(t, dirs, self.lambda);
                quadratic_form(a, &f) + linear_form(b, &f)
            })
            .sum()
    }

    pub fn surrogates(&self, t0: &Point, bound: MajorizerBound) -> Vec<PositionSurrogate> {
        self.terms
            .iter()
            .zip(&self.directions)
            .map(|((a, b), dirs)| build_surrogate(a, b, dirs, t0, self.lambda, bound))
            .collect()
    }
}

fn total_model(surrogates: &[PositionSurrogate], t0: &Point) -> QuadraticModel {
    let models: Vec<_> = surrogates.iter().map(PositionSurrogate::model).collect();
    QuadraticModel::sum(*t0, &models)
}

/// Planar-mode step: `Π_cell(t0 − Σ∇z_k / Σ(8π²/λ²)‖b̂_k‖₁)`. A flat
/// surrogate leaves the antenna where it is.
pub fn update_position_planar(surrogates: &[PositionSurrogate], t0: &Point, cell: &Rect) -> Point {
    match total_model(surrogates, t0).minimizer() {
        Some(p) => cell.project(&p),
        None => *t0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralUpdate {
    pub position: Point,
    /// `None` when the surrogate was flat and no QP was needed.
    pub qp: Option<QpSolution>,
}

/// Linearized spacing constraints `(t0 − t_j)ᵀ(t − t_j)/‖t0 − t_j‖ ≥ D`.
///
/// A coincident neighbour (possible only from an infeasible state) is
/// linearized around `t0` nudged by `1e-6·λ` along +x.
pub fn spacing_constraints(m: usize, t: &[Point], min_distance: f64, lambda: f64) -> Vec<Halfspace> {
    if min_distance <= 0.0 {
        return Vec::new();
    }
    let t0 = t[m];
    t.iter()
        .enumerate()
        .filter(|(j, _)| *j != m)
        .map(|(_, tj)| {
            let mut anchor = t0 - tj;
            if anchor.norm() == 0.0 {
                anchor = Point::new(1e-6 * lambda, 0.0);
            }
            let normal = anchor / anchor.norm();
            Halfspace::new(normal, min_distance + normal.dot(tj))
        })
        .collect()
}

/// General-mode step: minimize the summed surrogate over the region under
/// the linearized spacing constraints. The expansion point `t[m]` is
/// feasible for the QP, so the true subproblem value cannot increase.
pub fn update_position_general(
    m: usize,
    surrogates: &[PositionSurrogate],
    t: &[Point],
    min_distance: f64,
    region: &Rect,
    lambda: f64,
) -> Result<GeneralUpdate> {
    let t0 = t[m];
    let model = total_model(surrogates, &t0);
    if model.curvature <= 0.0 {
        return Ok(GeneralUpdate { position: t0, qp: None });
    }
    let problem = QpProblem {
        curvature: model.curvature,
        linear: model.linear_coefficient(),
        constraints: spacing_constraints(m, t, min_distance, lambda),
        bounds: *region,
    };
    let solution = qp::solve(&problem, &t0)?;
    Ok(GeneralUpdate {
        position: solution.x,
        qp: Some(solution),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamforming::{initial_beamformers, mse_all, wmmse_objective, wmmse_step};
    use crate::channel::generate_scenario;
    use crate::scenario::ScenarioConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small(seed: u64, m: usize, k: usize) -> (Scenario, BeamformerState) {
        let mut cfg = ScenarioConfig::default();
        cfg.num_bs_antennas = m;
        cfg.num_users = k;
        cfg.tx_paths = crate::scenario::PerUser::Same(3);
        cfg.rx_paths = crate::scenario::PerUser::Same(3);
        cfg.rng_seed = seed;
        let s = generate_scenario(&cfg).unwrap();
        let h = s.channel_matrix(&s.initial).unwrap();
        let alpha = cfg.alpha();
        let bf = wmmse_step(
            &h,
            &initial_beamformers(&h, cfg.p_max()),
            &alpha,
            cfg.sigma2(),
            cfg.p_max(),
        )
        .unwrap();
        (s, bf)
    }

    fn full_objective(s: &Scenario, pos: &PositionState, bf: &BeamformerState) -> f64 {
        let h = s.channel_matrix(pos).unwrap();
        let e = mse_all(&h, &bf.w, &bf.u, s.config.sigma2());
        wmmse_objective(&e, &s.config.alpha(), &bf.v)
    }

    #[test]
    fn silent_antenna_has_zero_quadratic_part() {
        let (s, mut bf) = small(1, 3, 2);
        bf.w.row_mut(1).fill(C64::new(0.0, 0.0));
        let (a, b) = build_coefficients(0, 1, &s, &s.initial, &bf).unwrap();
        assert!(a.iter().all(|z| z.norm() == 0.0));
        assert!(b.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn single_antenna_coefficients() {
        let (s, bf) = small(2, 1, 1);
        let (_, b) = build_coefficients(0, 0, &s, &s.initial, &bf).unwrap();
        let a = path_gain_vector(&s.initial.users[0], &s.paths[0], 1.0);
        let expected = &a * (bf.u[0] * bf.w[(0, 0)].conj() * (-2.0 * bf.v[0]));
        assert!((b - expected).norm() < 1e-12);
    }

    #[test]
    fn subproblem_reproduces_full_objective() {
        let (s, bf) = small(3, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for m in 0..4 {
            let sub = AntennaSubproblem::new(m, &s, &s.initial, &bf).unwrap();
            let reference = s.initial.bs[m];
            let base_full = full_objective(&s, &s.initial, &bf);
            let base_sub = sub.value(&reference);
            for _ in 0..100 {
                let p = Point::new(rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5));
                let mut pos = s.initial.clone();
                pos.bs[m] = p;
                let lhs = full_objective(&s, &pos, &bf) - base_full;
                let rhs = sub.value(&p) - base_sub;
                assert!((lhs - rhs).abs() < 1e-9 * base_full.abs().max(1.0), "{lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn surrogate_majorizes_and_is_tight() {
        let (s, bf) = small(4, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let sub = AntennaSubproblem::new(2, &s, &s.initial, &bf).unwrap();
        let t0 = s.initial.bs[2];
        let model = total_model(&sub.surrogates(&t0, MajorizerBound::Trace), &t0);
        assert_eq!(model.increment(&t0), 0.0);
        let q0 = sub.value(&t0);
        for _ in 0..1000 {
            let p = Point::new(rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5));
            assert!(sub.value(&p) - q0 <= model.increment(&p) + 1e-9 * q0.abs().max(1.0));
        }
    }

    #[test]
    fn planar_cases() {
        let flat = PositionSurrogate {
            a: DMatrix::zeros(1, 1),
            b: DVector::zeros(1),
            b_hat: DVector::zeros(1),
            grad_z: Point::zeros(),
            curvature: 0.0,
            expansion: Point::new(1.0, 1.0),
        };
        let cell = Rect::new(0.0, 5.0, 0.0, 5.0);
        assert_eq!(
            update_position_planar(std::slice::from_ref(&flat), &Point::new(1.0, 1.0), &cell),
            Point::new(1.0, 1.0)
        );
        let still = PositionSurrogate {
            curvature: 2.0,
            ..flat.clone()
        };
        assert_eq!(
            update_position_planar(std::slice::from_ref(&still), &Point::new(1.0, 1.0), &cell),
            Point::new(1.0, 1.0)
        );
        // Minimizer 1 − g/(2c): g = (−2, 1), c = 1 → (2, 0.5).
        let inside = PositionSurrogate {
            grad_z: Point::new(-2.0, 1.0),
            curvature: 1.0,
            ..flat.clone()
        };
        assert_eq!(
            update_position_planar(&[inside], &Point::new(1.0, 1.0), &cell),
            Point::new(2.0, 0.5)
        );
        // Step lands at (6, −1): clamp to (5, 0).
        let outside = PositionSurrogate {
            grad_z: Point::new(-10.0, 4.0),
            curvature: 1.0,
            ..flat
        };
        assert_eq!(
            update_position_planar(&[outside], &Point::new(1.0, 1.0), &cell),
            Point::new(5.0, 0.0)
        );
    }

    #[test]
    fn general_with_one_antenna_equals_planar_clamp() {
        let (s, bf) = small(5, 1, 2);
        let sub = AntennaSubproblem::new(0, &s, &s.initial, &bf).unwrap();
        let t0 = s.initial.bs[0];
        let sur = sub.surrogates(&t0, MajorizerBound::Trace);
        let region = s.config.tx_region;
        let g = update_position_general(0, &sur, &s.initial.bs, 0.5, &region, 1.0).unwrap();
        let p = update_position_planar(&sur, &t0, &region);
        assert!((g.position - p).norm() < 1e-12);
    }

    #[test]
    fn general_zero_gradient_is_fixed_point() {
        let sur = PositionSurrogate {
            a: DMatrix::zeros(1, 1),
            b: DVector::zeros(1),
            b_hat: DVector::zeros(1),
            grad_z: Point::zeros(),
            curvature: 3.0,
            expansion: Point::new(0.0, 0.0),
        };
        let t = [Point::new(0.0, 0.0), Point::new(1.0, 0.0)];
        let g = update_position_general(0, &[sur], &t, 0.5, &Rect::centered_square(5.0), 1.0).unwrap();
        assert!(g.position.norm() < 1e-15);
    }

    #[test]
    fn general_single_active_halfspace() {
        // Neighbour at (1, 0), D = 0.5, expansion at (0, 0): constraint
        // −x ≥ −0.5. Unconstrained minimizer (2, 1) projects to (0.5, 1).
        let sur = PositionSurrogate {
            a: DMatrix::zeros(1, 1),
            b: DVector::zeros(1),
            b_hat: DVector::zeros(1),
            grad_z: Point::new(-4.0, -2.0),
            curvature: 1.0,
            expansion: Point::zeros(),
        };
        let t = [Point::zeros(), Point::new(1.0, 0.0)];
        let g = update_position_general(0, &[sur], &t, 0.5, &Rect::centered_square(5.0), 1.0).unwrap();
        assert!((g.position - Point::new(0.5, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn updates_descend_and_stay_feasible() {
        for seed in 0..5 {
            let (s, bf) = small(20 + seed, 4, 2);
            let mut pos = s.initial.clone();
            for m in 0..4 {
                let sub = AntennaSubproblem::new(m, &s, &pos, &bf).unwrap();
                let t0 = pos.bs[m];
                let sur = sub.surrogates(&t0, MajorizerBound::Trace);
                let g = update_position_general(m, &sur, &pos.bs, 0.5, &s.config.tx_region, 1.0).unwrap();
                assert!(sub.value(&g.position) <= sub.value(&t0) + 1e-9 * sub.value(&t0).abs().max(1.0));
                pos.bs[m] = g.position;
                for (j, tj) in pos.bs.iter().enumerate() {
                    if j != m {
                        assert!((g.position - tj).norm() >= 0.5 - 1e-9);
                    }
                }
            }
        }
    }
}
