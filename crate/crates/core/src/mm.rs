//! Majorization-minimization building blocks shared by the BS and user
//! position updates.
//!
//! The position subproblems have the form `q(p) = fᴴ L f + Re(bᴴ f)` with
//! `f = f(p)` a field-response vector and `L` Hermitian PSD. Two bounds turn
//! `q` into an isotropic quadratic in `p`:
//!
//! 1. the quadratic form is majorized by a linear one in `f` using a
//!    scaled identity `m·I ⪰ L`, which folds into `b̂ = 2(L − mI)f₀ + b`;
//! 2. the linear form `z(p) = Re(b̂ᴴ f(p))` is bounded above by its
//!    first-order expansion plus `(4π²/λ²)‖b̂‖₁ ‖p − p₀‖²`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::channel::{field_response, wavenumber, C64};
use crate::geometry::Point;

/// Choice of `m` in the majorizer `m·I ⪰ L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MajorizerBound {
    /// `m = tr(L)`, i.e. `Σ‖·‖²` over the outer-product factors.
    #[default]
    Trace,
    /// `m = λ_max(L)`; identical to `Trace` for rank-one `L`.
    MaxEigenvalue,
}

/// `Re(xᴴ L x)`.
pub fn quadratic_form(l: &DMatrix<C64>, x: &DVector<C64>) -> f64 {
    x.dotc(&(l * x)).re
}

/// `Re(bᴴ f)`.
pub fn linear_form(b: &DVector<C64>, f: &DVector<C64>) -> f64 {
    b.dotc(f).re
}

/// Upper bound on `xᴴLx` from a majorizer `M ⪰ L`, tight at `x = x₀`:
/// `xᴴMx + 2Re(xᴴ(L−M)x₀) + x₀ᴴ(M−L)x₀`.
pub fn quadratic_majorizer(l: &DMatrix<C64>, m: &DMatrix<C64>, x: &DVector<C64>, x0: &DVector<C64>) -> f64 {
    let diff = l - m;
    quadratic_form(m, x) + 2.0 * x.dotc(&(&diff * x0)).re - quadratic_form(&diff, x0)
}

/// Gradient of `z(p) = Re(bᴴ f(p))` at `p0`.
pub fn linear_form_gradient(b: &DVector<C64>, directions: &[Point], p0: &Point, lambda: f64) -> Point {
    let f = field_response(p0, directions, lambda);
    let kappa = wavenumber(lambda);
    let mut g = Point::zeros();
    for ((bl, fl), n) in b.iter().zip(f.iter()).zip(directions) {
        let d = (bl.conj() * C64::new(0.0, kappa) * fl).re;
        g += n * d;
    }
    g
}

/// Curvature `(4π²/λ²)‖b‖₁` of the quadratic bounds on `z`.
pub fn linear_form_curvature(b: &DVector<C64>, lambda: f64) -> f64 {
    wavenumber(lambda).powi(2) * b.iter().map(|z| z.norm()).sum::<f64>()
}

/// Lower and upper quadratic bounds on `z(p)` expanded at `p0`.
pub fn linear_form_bounds(b: &DVector<C64>, directions: &[Point], p: &Point, p0: &Point, lambda: f64) -> (f64, f64) {
    let z0 = linear_form(b, &field_response(p0, directions, lambda));
    let g = linear_form_gradient(b, directions, p0, lambda);
    let d = p - p0;
    let first = z0 + g.dot(&d);
    let second = linear_form_curvature(b, lambda) * d.norm_squared();
    (first - second, first + second)
}

/// Isotropic quadratic upper model of an objective's increment:
/// `q(p) − q(p₀) ≤ gradientᵀ(p − p₀) + curvature·‖p − p₀‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticModel {
    pub expansion: Point,
    pub gradient: Point,
    pub curvature: f64,
}

impl QuadraticModel {
    pub fn increment(&self, p: &Point) -> f64 {
        let d = p - self.expansion;
        self.gradient.dot(&d) + self.curvature * d.norm_squared()
    }

    /// Sum of models sharing one expansion point.
    pub fn sum<'a>(expansion: Point, models: impl IntoIterator<Item = &'a QuadraticModel>) -> QuadraticModel {
        models.into_iter().fold(
            QuadraticModel {
                expansion,
                gradient: Point::zeros(),
                curvature: 0.0,
            },
            |acc, m| QuadraticModel {
                expansion,
                gradient: acc.gradient + m.gradient,
                curvature: acc.curvature + m.curvature,
            },
        )
    }

    /// Unconstrained minimizer `p₀ − gradient / (2·curvature)`; `None` when
    /// the model is flat.
    pub fn minimizer(&self) -> Option<Point> {
        (self.curvature > 0.0).then(|| self.expansion - self.gradient / (2.0 * self.curvature))
    }

    /// Linear coefficient of the model written as `c‖p‖² + gᵀp + const`.
    pub fn linear_coefficient(&self) -> Point {
        self.gradient - self.expansion * (2.0 * self.curvature)
    }
}

/// Majorize `q(p) = fᴴLf + Re(bᴴf)` at `p0`. Returns `b̂` and the model.
pub fn majorize(
    l: &DMatrix<C64>,
    b: &DVector<C64>,
    directions: &[Point],
    p0: &Point,
    lambda: f64,
    bound: MajorizerBound,
) -> (DVector<C64>, QuadraticModel) {
    let f0 = field_response(p0, directions, lambda);
    let m = match bound {
        MajorizerBound::Trace => l.trace().re,
        MajorizerBound::MaxEigenvalue => {
            let h = (l + l.adjoint()) * C64::from(0.5);
            SymmetricEigen::new(h).eigenvalues.max().max(0.0)
        }
    };
    let b_hat = (l * &f0 - &f0 * C64::from(m)) * C64::from(2.0) + b;
    let model = QuadraticModel {
        expansion: *p0,
        gradient: linear_form_gradient(&b_hat, directions, p0, lambda),
        curvature: linear_form_curvature(&b_hat, lambda),
    };
    (b_hat, model)
}

/// Linear lower bound on `‖p − q‖` tight at `p0`:
/// `(p0 − q)ᵀ(p − q) / ‖p0 − q‖`. `None` when `p0 = q`.
pub fn minorize_distance(p: &Point, q: &Point, p0: &Point) -> Option<f64> {
    let a = p0 - q;
    let n = a.norm();
    (n > 0.0).then(|| a.dot(&(p - q)) / n)
}
