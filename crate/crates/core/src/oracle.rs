//! Reference computations used to verify the optimizer.
//!
//! Each routine here takes a deliberately different route from the code it
//! checks: polygon clipping instead of an active-set iteration, central
//! differences instead of analytic gradients, exhaustive grids instead of
//! MM steps.

use crate::geometry::{Halfspace, Point, Rect};
use crate::qp::QpProblem;

/// Clip a convex polygon (vertex list) by `h` (Sutherland–Hodgman).
fn clip(poly: &[Point], h: &Halfspace) -> Vec<Point> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for (i, a) in poly.iter().enumerate() {
        let b = &poly[(i + 1) % poly.len()];
        let (sa, sb) = (h.slack(a), h.slack(b));
        if sa >= 0.0 {
            out.push(*a);
        }
        if (sa > 0.0 && sb < 0.0) || (sa < 0.0 && sb > 0.0) {
            let t = sa / (sa - sb);
            out.push(a + (b - a) * t);
        }
    }
    out
}

fn closest_on_segment(a: &Point, b: &Point, p: &Point) -> Point {
    let d = b - a;
    let len2 = d.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    let t = ((p - a).dot(&d) / len2).clamp(0.0, 1.0);
    a + d * t
}

/// Feasible polygon of a QP: the box clipped by every halfspace.
pub fn feasible_polygon(bounds: &Rect, constraints: &[Halfspace]) -> Vec<Point> {
    let mut poly = vec![
        Point::new(bounds.x[0], bounds.y[0]),
        Point::new(bounds.x[1], bounds.y[0]),
        Point::new(bounds.x[1], bounds.y[1]),
        Point::new(bounds.x[0], bounds.y[1]),
    ];
    for h in constraints {
        if poly.is_empty() {
            break;
        }
        poly = clip(&poly, h);
    }
    poly
}

/// Exact QP optimum by explicit geometry: with an isotropic Hessian the
/// problem is the Euclidean projection of the unconstrained minimizer onto
/// the feasible polygon, which is either the minimizer itself or the
/// closest point on one of the polygon's edges. `None` when infeasible.
pub fn qp_by_polygon_clipping(problem: &QpProblem) -> Option<(Point, f64)> {
    let poly = feasible_polygon(&problem.bounds, &problem.constraints);
    if poly.is_empty() {
        return None;
    }
    let target = problem.unconstrained_minimizer();
    let x = if problem.max_violation(&target) <= 0.0 {
        target
    } else {
        (0..poly.len())
            .map(|i| closest_on_segment(&poly[i], &poly[(i + 1) % poly.len()], &target))
            .min_by(|p, q| (p - target).norm_squared().total_cmp(&(q - target).norm_squared()))?
    };
    Some((x, problem.objective(&x)))
}

/// Central-difference gradient of a scalar function of a planar point.
pub fn central_difference<F: Fn(&Point) -> f64>(f: F, x: &Point, step: f64) -> Point {
    let ex = Point::new(step, 0.0);
    let ey = Point::new(0.0, step);
    Point::new(
        (f(&(x + ex)) - f(&(x - ex))) / (2.0 * step),
        (f(&(x + ey)) - f(&(x - ey))) / (2.0 * step),
    )
}

/// Minimum of `f` over an `n × n` grid spanning `rect` (corners included).
pub fn grid_minimum<F: Fn(&Point) -> f64>(f: F, rect: &Rect, n: usize) -> (Point, f64) {
    assert!(n >= 2, "grid needs at least two points per side");
    let mut best = (rect.center(), f64::INFINITY);
    for i in 0..n {
        let x = rect.x[0] + rect.width() * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let y = rect.y[0] + rect.height() * j as f64 / (n - 1) as f64;
            let p = Point::new(x, y);
            let v = f(&p);
            if v < best.1 {
                best = (p, v);
            }
        }
    }
    best
}
