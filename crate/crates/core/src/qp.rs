//! Convex QP in two variables with an isotropic Hessian:
//!
//! ```text
//! minimize    c‖x‖² + gᵀx
//! subject to  a_jᵀx ≥ β_j   (j = 1..n)
//!             x ∈ box
//! ```
//!
//! This is exactly the shape of a general-mode BS position update. The
//! solver is a primal active-set method started from a caller-supplied
//! feasible point; in the plane at most two constraints are ever active.
//! If the iteration cap is hit, every candidate active set (none, one edge,
//! two edges) is enumerated instead.

use thiserror::Error;

use crate::geometry::{Halfspace, Point, Rect};

pub const CONSTRAINT_TOL: f64 = 1e-9;
pub const KKT_TOL: f64 = 1e-7;
pub const MAX_ITERS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("curvature must be positive and finite, got {0}")]
    BadCurvature(f64),
    #[error("non-finite problem data")]
    NonFinite,
    #[error("constraint {0} has a zero normal")]
    DegenerateConstraint(usize),
    #[error("start point violates the constraints by {0}")]
    InfeasibleStart(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub curvature: f64,
    pub linear: Point,
    pub constraints: Vec<Halfspace>,
    pub bounds: Rect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Point,
    pub objective: f64,
    pub iterations: usize,
    /// The active-set iteration certified the KKT conditions.
    pub converged: bool,
    /// The enumeration fallback replaced the active-set iterate.
    pub used_fallback: bool,
    pub kkt_residual: f64,
}

impl QpProblem {
    pub fn objective(&self, x: &Point) -> f64 {
        self.curvature * x.norm_squared() + self.linear.dot(x)
    }

    pub fn unconstrained_minimizer(&self) -> Point {
        -self.linear / (2.0 * self.curvature)
    }

    /// General constraints followed by the four box sides, unit normals.
    pub fn halfspaces(&self) -> Result<Vec<Halfspace>, QpError> {
        self.constraints
            .iter()
            .chain(self.bounds.halfspaces().iter())
            .enumerate()
            .map(|(i, h)| h.normalized().ok_or(QpError::DegenerateConstraint(i)))
            .collect()
    }

    /// Largest constraint violation at `x` (0 when feasible).
    pub fn max_violation(&self, x: &Point) -> f64 {
        let general = self
            .constraints
            .iter()
            .filter_map(Halfspace::normalized)
            .map(|h| -h.slack(x))
            .fold(0.0, f64::max);
        general.max(self.bounds.violation(x))
    }

    fn validate(&self) -> Result<(), QpError> {
        if !(self.curvature > 0.0 && self.curvature.is_finite()) {
            return Err(QpError::BadCurvature(self.curvature));
        }
        let finite = self.linear.iter().all(|v| v.is_finite())
            && self.bounds.is_well_formed()
            && self
                .constraints
                .iter()
                .all(|h| h.offset.is_finite() && h.normal.iter().all(|v| v.is_finite()));
        if finite {
            Ok(())
        } else {
            Err(QpError::NonFinite)
        }
    }
}

fn worst_violation(cons: &[Halfspace], x: &Point) -> f64 {
    cons.iter().map(|h| -h.slack(x)).fold(0.0, f64::max)
}

/// Minimize `‖x + p − target‖²` over steps `p` that keep every working
/// constraint active.
fn equality_step(cons: &[Halfspace], working: &[usize], x: &Point, target: &Point) -> Point {
    let d = target - x;
    match working {
        [] => d,
        [i] => {
            let a = cons[*i].normal;
            d - a * a.dot(&d)
        }
        _ => Point::zeros(),
    }
}

/// Multipliers `λ` with `∇q = Σ λ_i a_i` over the working set.
fn multipliers(cons: &[Halfspace], working: &[usize], grad: &Point) -> Vec<f64> {
    match working {
        [] => Vec::new(),
        [i] => vec![cons[*i].normal.dot(grad)],
        [i, j] => {
            let (a, b) = (cons[*i].normal, cons[*j].normal);
            let det = a.x * b.y - a.y * b.x;
            vec![(grad.x * b.y - grad.y * b.x) / det, (a.x * grad.y - a.y * grad.x) / det]
        }
        _ => unreachable!("at most two constraints are active in the plane"),
    }
}

fn stationarity(cons: &[Halfspace], working: &[usize], lambda: &[f64], grad: &Point) -> f64 {
    let mut r = *grad;
    for (&i, &l) in working.iter().zip(lambda) {
        r -= cons[i].normal * l;
    }
    let neg = lambda.iter().map(|l| -l).fold(0.0, f64::max);
    (r.norm() / grad.norm().max(1.0)).max(neg)
}

/// Solve from a feasible start (within [`CONSTRAINT_TOL`]).
pub fn solve(problem: &QpProblem, start: &Point) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let cons = problem.halfspaces()?;
    let violation = worst_violation(&cons, start);
    if violation > CONSTRAINT_TOL || !start.iter().all(|v| v.is_finite()) {
        return Err(QpError::InfeasibleStart(violation));
    }
    let target = problem.unconstrained_minimizer();
    let c = problem.curvature;
    let done = |x: Point, iterations, converged, used_fallback, kkt_residual| QpSolution {
        objective: problem.objective(&x),
        x,
        iterations,
        converged,
        used_fallback,
        kkt_residual,
    };
    if worst_violation(&cons, &target) <= 0.0 {
        return Ok(done(target, 0, true, false, 0.0));
    }

    let scale = 1.0 + start.norm().max(target.norm());
    let mut x = *start;
    let mut working: Vec<usize> = Vec::with_capacity(2);
    for iter in 1..=MAX_ITERS {
        let p = equality_step(&cons, &working, &x, &target);
        if p.norm() <= 1e-14 * scale {
            let grad = (x - target) * (2.0 * c);
            let lambda = multipliers(&cons, &working, &grad);
            let most_negative = lambda
                .iter()
                .enumerate()
                .filter(|(_, l)| **l < -KKT_TOL * grad.norm().max(1.0))
                .min_by(|a, b| a.1.total_cmp(b.1));
            match most_negative {
                Some((pos, _)) => {
                    working.remove(pos);
                }
                None => {
                    let residual = stationarity(&cons, &working, &lambda, &grad);
                    return Ok(done(x, iter, residual <= KKT_TOL, false, residual));
                }
            }
            continue;
        }
        let mut step = 1.0;
        let mut blocking = None;
        for (i, h) in cons.iter().enumerate() {
            if working.contains(&i) {
                continue;
            }
            let rate = h.normal.dot(&p);
            if rate < -1e-15 * p.norm() {
                let s = h.slack(&x).max(0.0) / -rate;
                if s < step {
                    step = s;
                    blocking = Some(i);
                }
            }
        }
        x += p * step;
        if let Some(i) = blocking {
            working.push(i);
        }
    }

    let x = enumerate_active_sets(&cons, &target)
        .filter(|best| problem.objective(best) < problem.objective(&x))
        .unwrap_or(x);
    Ok(done(x, MAX_ITERS, false, true, f64::NAN))
}

/// Best feasible point among the unconstrained minimizer, its projection
/// onto every constraint line, and every pairwise line intersection.
fn enumerate_active_sets(cons: &[Halfspace], target: &Point) -> Option<Point> {
    let mut candidates = vec![*target];
    for (i, a) in cons.iter().enumerate() {
        candidates.push(target - a.normal * a.slack(target));
        for b in &cons[i + 1..] {
            let det = a.normal.x * b.normal.y - a.normal.y * b.normal.x;
            if det.abs() > 1e-12 {
                candidates.push(Point::new(
                    (a.offset * b.normal.y - b.offset * a.normal.y) / det,
                    (a.normal.x * b.offset - b.normal.x * a.offset) / det,
                ));
            }
        }
    }
    candidates
        .into_iter()
        .filter(|p| worst_violation(cons, p) <= CONSTRAINT_TOL)
        .min_by(|p, q| (p - target).norm_squared().total_cmp(&(q - target).norm_squared()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::qp_by_polygon_clipping;
    use proptest::prelude::*;

    fn unit_box() -> Rect {
        Rect::new(0.0, 1.0, 0.0, 1.0)
    }

    #[test]
    fn interior_optimum() {
        let p = QpProblem {
            curvature: 2.0,
            linear: Point::new(-2.0, -1.0),
            constraints: vec![],
            bounds: unit_box(),
        };
        let s = solve(&p, &Point::new(0.9, 0.9)).unwrap();
        assert_eq!(s.x, Point::new(0.5, 0.25));
        assert!(s.converged);
    }

    #[test]
    fn box_clamp() {
        let p = QpProblem {
            curvature: 1.0,
            linear: Point::new(-4.0, 0.0),
            constraints: vec![],
            bounds: unit_box(),
        };
        let s = solve(&p, &Point::new(0.5, 0.5)).unwrap();
        assert!((s.x - Point::new(1.0, 0.0)).norm() < 1e-12);
        assert!(s.converged);
    }

    #[test]
    fn single_halfspace_matches_hand_kkt() {
        // Unconstrained minimizer (1, 1); constraint x + y ≤ 1 written as
        // −x − y ≥ −1. Projection onto the line is (0.5, 0.5), λ = 2c·(0.5)√2.
        let p = QpProblem {
            curvature: 1.0,
            linear: Point::new(-2.0, -2.0),
            constraints: vec![Halfspace::new(Point::new(-1.0, -1.0), -1.0)],
            bounds: Rect::new(-5.0, 5.0, -5.0, 5.0),
        };
        let s = solve(&p, &Point::new(0.0, 0.0)).unwrap();
        assert!((s.x - Point::new(0.5, 0.5)).norm() < 1e-12);
        assert!(s.converged);
        assert!(s.kkt_residual <= KKT_TOL);
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let p = QpProblem {
            curvature: 1.0,
            linear: Point::zeros(),
            constraints: vec![],
            bounds: unit_box(),
        };
        assert!(matches!(
            solve(&p, &Point::new(2.0, 0.0)),
            Err(QpError::InfeasibleStart(_))
        ));
        let bad = QpProblem { curvature: 0.0, ..p };
        assert!(matches!(solve(&bad, &Point::zeros()), Err(QpError::BadCurvature(_))));
    }

    #[test]
    fn fallback_enumeration_finds_vertex() {
        let cons = QpProblem {
            curvature: 1.0,
            linear: Point::new(-4.0, -4.0),
            constraints: vec![],
            bounds: unit_box(),
        }
        .halfspaces()
        .unwrap();
        let best = enumerate_active_sets(&cons, &Point::new(2.0, 2.0)).unwrap();
        assert!((best - Point::new(1.0, 1.0)).norm() < 1e-12);
    }

    fn halfspace_through(point: Point, angle: f64, slack: f64) -> Halfspace {
        let n = Point::new(angle.cos(), angle.sin());
        Halfspace::new(n, n.dot(&point) - slack)
    }

    prop_compose! {
        fn instance()(
            c in 0.1f64..5.0,
            gx in -20.0f64..20.0,
            gy in -20.0f64..20.0,
            sx in -2.0f64..2.0,
            sy in -2.0f64..2.0,
            cons in prop::collection::vec((0.0f64..std::f64::consts::TAU, 0.0f64..1.0), 0..12),
        ) -> (QpProblem, Point) {
            let start = Point::new(sx, sy);
            let constraints = cons.iter().map(|&(a, s)| halfspace_through(start, a, s)).collect();
            (QpProblem { curvature: c, linear: Point::new(gx, gy), constraints, bounds: Rect::new(-3.0, 3.0, -3.0, 3.0) }, start)
        }
    }

    proptest! {
        #[test]
        fn matches_polygon_oracle((p, start) in instance()) {
            let s = solve(&p, &start).unwrap();
            prop_assert!(p.max_violation(&s.x) <= CONSTRAINT_TOL);
            prop_assert!(s.objective <= p.objective(&start) + 1e-12);
            let (_, best) = qp_by_polygon_clipping(&p).unwrap();
            prop_assert!((s.objective - best).abs() <= 1e-8 * best.abs().max(1.0));
        }

        #[test]
        fn invariant_under_constraint_order((p, start) in instance()) {
            let a = solve(&p, &start).unwrap();
            let mut q = p.clone();
            q.constraints.reverse();
            let b = solve(&q, &start).unwrap();
            prop_assert!((a.x - b.x).norm() <= 1e-9);
        }

        #[test]
        fn box_only_is_a_clamp(c in 0.1f64..5.0, gx in -20.0f64..20.0, gy in -20.0f64..20.0) {
            let p = QpProblem { curvature: c, linear: Point::new(gx, gy), constraints: vec![], bounds: unit_box() };
            let s = solve(&p, &Point::new(0.5, 0.5)).unwrap();
            let clamp = unit_box().project(&p.unconstrained_minimizer());
            prop_assert!((s.x - clamp).norm() <= 1e-12);
        }
    }
}
