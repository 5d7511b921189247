//! Planar geometry: positions, axis-aligned rectangles and halfspaces.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

/// A position in the antenna plane, in meters.
pub type Point = Vector2<f64>;

/// Axis-aligned rectangle `[x_min, x_max] × [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Rect {
            x: [x_min, x_max],
            y: [y_min, y_max],
        }
    }

    /// Square of side `side` centered at the origin.
    pub fn centered_square(side: f64) -> Self {
        let h = 0.5 * side;
        Rect::new(-h, h, -h, h)
    }

    pub fn width(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    pub fn height(&self) -> f64 {
        self.y[1] - self.y[0]
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.x[0] + self.x[1]), 0.5 * (self.y[0] + self.y[1]))
    }

    pub fn is_well_formed(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite()) && self.x[0] <= self.x[1] && self.y[0] <= self.y[1]
    }

    pub fn contains(&self, p: &Point, tol: f64) -> bool {
        p.x >= self.x[0] - tol && p.x <= self.x[1] + tol && p.y >= self.y[0] - tol && p.y <= self.y[1] + tol
    }

    pub fn contains_rect(&self, other: &Rect, tol: f64) -> bool {
        other.x[0] >= self.x[0] - tol
            && other.x[1] <= self.x[1] + tol
            && other.y[0] >= self.y[0] - tol
            && other.y[1] <= self.y[1] + tol
    }

    /// Nearest point of the rectangle (per-coordinate clamp).
    pub fn project(&self, p: &Point) -> Point {
        Point::new(p.x.clamp(self.x[0], self.x[1]), p.y.clamp(self.y[0], self.y[1]))
    }

    /// Euclidean distance between the closest points of two rectangles.
    pub fn distance_to(&self, other: &Rect) -> f64 {
        let dx = (other.x[0] - self.x[1]).max(self.x[0] - other.x[1]).max(0.0);
        let dy = (other.y[0] - self.y[1]).max(self.y[0] - other.y[1]).max(0.0);
        dx.hypot(dy)
    }

    /// Largest violation of the rectangle bounds (0 when inside).
    pub fn violation(&self, p: &Point) -> f64 {
        [self.x[0] - p.x, p.x - self.x[1], self.y[0] - p.y, p.y - self.y[1]]
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// The four bounds as halfspaces `normal·x ≥ offset`.
    pub fn halfspaces(&self) -> [Halfspace; 4] {
        [
            Halfspace::new(Point::new(1.0, 0.0), self.x[0]),
            Halfspace::new(Point::new(-1.0, 0.0), -self.x[1]),
            Halfspace::new(Point::new(0.0, 1.0), self.y[0]),
            Halfspace::new(Point::new(0.0, -1.0), -self.y[1]),
        ]
    }
}

/// Halfspace `{x : normal·x ≥ offset}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Halfspace {
    pub normal: Point,
    pub offset: f64,
}

impl Halfspace {
    pub fn new(normal: Point, offset: f64) -> Self {
        Halfspace { normal, offset }
    }

    /// `normal·x − offset`; non-negative inside.
    pub fn slack(&self, x: &Point) -> f64 {
        self.normal.dot(x) - self.offset
    }

    /// Same set with a unit normal. `None` for a degenerate normal.
    pub fn normalized(&self) -> Option<Halfspace> {
        let n = self.normal.norm();
        (n > 0.0 && n.is_finite()).then(|| Halfspace::new(self.normal / n, self.offset / n))
    }
}

/// Smallest pairwise distance among `points` (`+∞` for fewer than two).
pub fn min_pairwise_distance(points: &[Point]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.min((a - b).norm());
        }
    }
    best
}
