//! Field-response channel model.
//!
//! Each user `k` sees `L_t` transmit paths and `L_r` receive paths. An
//! antenna at position `p` observes path `l` with phase `(2π/λ)·pᵀn_l`,
//! where `n_l = (sinθ·cosφ, cosθ)` is the path's planar direction vector.
//! The BS-to-user channel is `h_k = F_kᴴ Σ_k g_k`, with `F_k` stacking the
//! transmit field responses of all BS antennas column-wise.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::{min_pairwise_distance, Point, Rect};
use crate::scenario::{MovementMode, PathGainScaling, ScenarioConfig};

pub type C64 = Complex<f64>;

/// `2π/λ`.
pub fn wavenumber(lambda: f64) -> f64 {
    2.0 * PI / lambda
}

/// Planar direction vector `(sinθ·cosφ, cosθ)` of a path with elevation
/// `theta` and azimuth `phi`.
pub fn direction_vector(theta: f64, phi: f64) -> Point {
    Point::new(theta.sin() * phi.cos(), theta.cos())
}

/// Unit-modulus phase factors `exp(j·(2π/λ)·pᵀn_l)` for every direction.
pub fn field_response(p: &Point, directions: &[Point], lambda: f64) -> DVector<C64> {
    let kappa = wavenumber(lambda);
    DVector::from_iterator(
        directions.len(),
        directions.iter().map(|n| C64::from_polar(1.0, kappa * p.dot(n))),
    )
}

/// Propagation geometry between the BS and one user.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub theta_t: Vec<f64>,
    pub phi_t: Vec<f64>,
    pub theta_r: Vec<f64>,
    pub phi_r: Vec<f64>,
    pub n_t: Vec<Point>,
    pub n_r: Vec<Point>,
    /// Path-response matrix, `L_t × L_r`.
    pub sigma: DMatrix<C64>,
}

impl PathSet {
    pub fn new(
        theta_t: Vec<f64>,
        phi_t: Vec<f64>,
        theta_r: Vec<f64>,
        phi_r: Vec<f64>,
        sigma: DMatrix<C64>,
    ) -> Result<Self> {
        if theta_t.len() != phi_t.len() || theta_r.len() != phi_r.len() {
            return Err(Error::Shape(format!(
                "angle lists differ in length: θt {} φt {} θr {} φr {}",
                theta_t.len(),
                phi_t.len(),
                theta_r.len(),
                phi_r.len()
            )));
        }
        if theta_t.is_empty() || theta_r.is_empty() {
            return Err(Error::Shape("a path set needs at least one path per side".into()));
        }
        if sigma.shape() != (theta_t.len(), theta_r.len()) {
            return Err(Error::Shape(format!(
                "path-response matrix is {}×{}, expected {}×{}",
                sigma.nrows(),
                sigma.ncols(),
                theta_t.len(),
                theta_r.len()
            )));
        }
        let n_t = theta_t
            .iter()
            .zip(&phi_t)
            .map(|(&t, &p)| direction_vector(t, p))
            .collect();
        let n_r = theta_r
            .iter()
            .zip(&phi_r)
            .map(|(&t, &p)| direction_vector(t, p))
            .collect();
        Ok(PathSet {
            theta_t,
            phi_t,
            theta_r,
            phi_r,
            n_t,
            n_r,
            sigma,
        })
    }

    /// Path set given directly by direction vectors. Angles are filled with
    /// NaN since they are not recoverable from `n` in general.
    pub fn from_directions(n_t: Vec<Point>, n_r: Vec<Point>, sigma: DMatrix<C64>) -> Result<Self> {
        if sigma.shape() != (n_t.len(), n_r.len()) || n_t.is_empty() || n_r.is_empty() {
            return Err(Error::Shape(format!(
                "path-response matrix is {}×{}, directions give {}×{}",
                sigma.nrows(),
                sigma.ncols(),
                n_t.len(),
                n_r.len()
            )));
        }
        Ok(PathSet {
            theta_t: vec![f64::NAN; n_t.len()],
            phi_t: vec![f64::NAN; n_t.len()],
            theta_r: vec![f64::NAN; n_r.len()],
            phi_r: vec![f64::NAN; n_r.len()],
            n_t,
            n_r,
            sigma,
        })
    }

    pub fn tx_count(&self) -> usize {
        self.n_t.len()
    }

    pub fn rx_count(&self) -> usize {
        self.n_r.len()
    }
}

/// Transmit field-response vector `f_k(t_m)`.
pub fn field_response_tx(t_m: &Point, paths: &PathSet, lambda: f64) -> DVector<C64> {
    field_response(t_m, &paths.n_t, lambda)
}

/// Receive field-response vector `g_k(r_k)`.
pub fn field_response_rx(r_k: &Point, paths: &PathSet, lambda: f64) -> DVector<C64> {
    field_response(r_k, &paths.n_r, lambda)
}

/// Transmit-side field-response matrix `F_k(t)`, `L_t × M`.
pub fn field_response_matrix(t: &[Point], paths: &PathSet, lambda: f64) -> DMatrix<C64> {
    let cols: Vec<_> = t.iter().map(|p| field_response_tx(p, paths, lambda)).collect();
    if cols.is_empty() {
        return DMatrix::zeros(paths.tx_count(), 0);
    }
    DMatrix::from_columns(&cols)
}

/// `Σ_k g_k(r_k)`: the receive side folded into the path-response matrix.
pub fn path_gain_vector(r_k: &Point, paths: &PathSet, lambda: f64) -> DVector<C64> {
    &paths.sigma * field_response_rx(r_k, paths, lambda)
}

/// Channel vector `h_k = F_kᴴ(t) Σ_k g_k(r_k)` of length `M`.
pub fn assemble_channel(t: &[Point], r_k: &Point, paths: &PathSet, lambda: f64) -> Result<DVector<C64>> {
    if paths.sigma.shape() != (paths.tx_count(), paths.rx_count()) {
        return Err(Error::Shape(format!(
            "path-response matrix is {}×{}, path counts are {}×{}",
            paths.sigma.nrows(),
            paths.sigma.ncols(),
            paths.tx_count(),
            paths.rx_count()
        )));
    }
    let a = path_gain_vector(r_k, paths, lambda);
    Ok(DVector::from_iterator(
        t.len(),
        t.iter().map(|p| field_response_tx(p, paths, lambda).dotc(&a)),
    ))
}

/// Antenna positions at the BS (`t`, M points) and at the users (`r`, K points).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionState {
    pub bs: Vec<Point>,
    pub users: Vec<Point>,
}

/// Everything needed to run the optimizer on one channel realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub paths: Vec<PathSet>,
    pub initial: PositionState,
}

impl Scenario {
    /// Channel matrix `H` (`M × K`), column `k` is `h_k(t, r_k)`.
    pub fn channel_matrix(&self, positions: &PositionState) -> Result<DMatrix<C64>> {
        let lambda = self.config.wavelength;
        let cols = self
            .paths
            .iter()
            .zip(&positions.users)
            .map(|(p, r)| assemble_channel(&positions.bs, r, p, lambda))
            .collect::<Result<Vec<_>>>()?;
        if cols.len() != self.paths.len() || positions.users.len() != self.paths.len() {
            return Err(Error::Shape(format!(
                "{} users in positions, {} path sets",
                positions.users.len(),
                self.paths.len()
            )));
        }
        Ok(DMatrix::from_columns(&cols))
    }
}

/// Draw a random channel realization and the initial antenna placement.
///
/// RNG draw order is fixed (per user: θt, φt, θr, φr, then Σ row-major),
/// so a given seed reproduces the scenario bit for bit.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let [lo, hi] = config.angle_range;
    let angles = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(lo..=hi)).collect() };
    let mut paths = Vec::with_capacity(config.num_users);
    for k in 0..config.num_users {
        let lt = config.tx_paths.get(k);
        let lr = config.rx_paths.get(k);
        let theta_t = angles(&mut rng, lt);
        let phi_t = angles(&mut rng, lt);
        let theta_r = angles(&mut rng, lr);
        let phi_r = angles(&mut rng, lr);
        let variance = match config.path_gain_scaling {
            PathGainScaling::InverseTxPaths => 1.0 / lt as f64,
            PathGainScaling::Unit => 1.0,
        };
        let std = (0.5 * variance).sqrt();
        let mut sigma = DMatrix::zeros(lt, lr);
        for i in 0..lt {
            for j in 0..lr {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                sigma[(i, j)] = C64::new(std * re, std * im);
            }
        }
        paths.push(PathSet::new(theta_t, phi_t, theta_r, phi_r, sigma)?);
    }

    let cells = config.bs_cells()?;
    let initial = if config.random_init {
        random_positions(config, &cells, &mut rng)?
    } else {
        PositionState {
            bs: cells.iter().map(Rect::center).collect(),
            users: (0..config.num_users)
                .map(|k| config.rx_regions.get(k).center())
                .collect(),
        }
    };
    let gap = min_pairwise_distance(&initial.bs);
    if gap < config.min_distance - crate::FEASIBILITY_TOL {
        return Err(Error::Infeasible(format!(
            "initial BS placement has spacing {gap} < D = {}",
            config.min_distance
        )));
    }
    Ok(Scenario {
        config: config.clone(),
        paths,
        initial,
    })
}

fn uniform_in(rect: &Rect, rng: &mut ChaCha8Rng) -> Point {
    let x = rect.x[0] + (rect.x[1] - rect.x[0]) * rng.random::<f64>();
    let y = rect.y[0] + (rect.y[1] - rect.y[0]) * rng.random::<f64>();
    Point::new(x, y)
}

fn random_positions(config: &ScenarioConfig, cells: &[Rect], rng: &mut ChaCha8Rng) -> Result<PositionState> {
    const ATTEMPTS: usize = 10_000;
    let bs = match config.mode {
        MovementMode::Planar => cells.iter().map(|c| uniform_in(c, rng)).collect(),
        MovementMode::General => {
            let mut placed: Vec<Point> = Vec::with_capacity(config.num_bs_antennas);
            for m in 0..config.num_bs_antennas {
                let p = (0..ATTEMPTS)
                    .map(|_| uniform_in(&config.tx_region, rng))
                    .find(|p| placed.iter().all(|q| (p - q).norm() >= config.min_distance))
                    .ok_or_else(|| {
                        Error::Infeasible(format!("random placement of antenna {m} failed after {ATTEMPTS} draws"))
                    })?;
                placed.push(p);
            }
            placed
        }
    };
    let users = (0..config.num_users)
        .map(|k| uniform_in(&config.rx_regions.get(k), rng))
        .collect();
    Ok(PositionState { bs, users })
}

// Complex matrices are archived row-major as nested `[re, im]` pairs.
#[derive(Serialize, Deserialize)]
struct PathSetRecord {
    theta_t: Vec<f64>,
    phi_t: Vec<f64>,
    theta_r: Vec<f64>,
    phi_r: Vec<f64>,
    sigma: Vec<Vec<[f64; 2]>>,
}

impl Serialize for PathSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let sigma = self
            .sigma
            .row_iter()
            .map(|row| row.iter().map(|z| [z.re, z.im]).collect())
            .collect();
        PathSetRecord {
            theta_t: self.theta_t.clone(),
            phi_t: self.phi_t.clone(),
            theta_r: self.theta_r.clone(),
            phi_r: self.phi_r.clone(),
            sigma,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PathSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = PathSetRecord::deserialize(d)?;
        let rows = rec.sigma.len();
        let cols = rec.sigma.first().map_or(0, Vec::len);
        if rec.sigma.iter().any(|r| r.len() != cols) {
            return Err(serde::de::Error::custom("ragged path-response matrix"));
        }
        let sigma = DMatrix::from_fn(rows, cols, |i, j| {
            let [re, im] = rec.sigma[i][j];
            C64::new(re, im)
        });
        PathSet::new(rec.theta_t, rec.phi_t, rec.theta_r, rec.phi_r, sigma).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn single_path(n_t: Point, n_r: Point, sigma: C64) -> PathSet {
        PathSet::from_directions(vec![n_t], vec![n_r], DMatrix::from_element(1, 1, sigma)).unwrap()
    }

    fn close(a: C64, b: C64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn direction_vector_cases() {
        let n = direction_vector(FRAC_PI_2, 0.0);
        assert!((n - Point::new(1.0, 0.0)).norm() < 1e-15);
        for phi in [0.0, 1.0, 2.5] {
            assert_eq!(direction_vector(0.0, phi), Point::new(0.0, 1.0));
        }
        let n = direction_vector(PI / 4.0, PI / 3.0);
        assert!((n.x - 0.353_553_390_593_273_8).abs() < 1e-12);
        assert!((n.y - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn tx_field_response_cases() {
        let paths = PathSet::from_directions(
            vec![Point::new(1.0, 0.0), Point::new(0.0, 1.0)],
            vec![Point::new(1.0, 0.0)],
            DMatrix::from_element(2, 1, C64::new(1.0, 0.0)),
        )
        .unwrap();
        let f = field_response_tx(&Point::zeros(), &paths, 1.0);
        assert!(f.iter().all(|z| close(*z, C64::new(1.0, 0.0))));

        let f = field_response_tx(&Point::new(0.25, 0.0), &paths, 1.0);
        assert!(close(f[0], C64::new(0.0, 1.0)));

        let f = field_response_tx(&Point::new(0.5, 0.5), &paths, 1.0);
        assert!(close(f[0], C64::new(-1.0, 0.0)));
        assert!(close(f[1], C64::new(-1.0, 0.0)));
    }

    #[test]
    fn rx_field_response_cases() {
        let paths = single_path(Point::new(1.0, 0.0), Point::new(0.0, 1.0), C64::new(1.0, 0.0));
        assert!(close(
            field_response_rx(&Point::zeros(), &paths, 1.0)[0],
            C64::new(1.0, 0.0)
        ));
        assert!(close(
            field_response_rx(&Point::new(0.0, 0.5), &paths, 1.0)[0],
            C64::new(-1.0, 0.0)
        ));
        let paths = single_path(Point::new(1.0, 0.0), Point::new(1.0, 0.0), C64::new(1.0, 0.0));
        assert!(close(
            field_response_rx(&Point::new(0.5, 0.0), &paths, 2.0)[0],
            C64::new(0.0, 1.0)
        ));
    }

    #[test]
    fn scalar_channels() {
        let o = Point::zeros();
        let paths = single_path(Point::new(1.0, 0.0), Point::new(1.0, 0.0), C64::new(1.0, 0.0));
        let h = assemble_channel(&[o], &o, &paths, 1.0).unwrap();
        assert!(close(h[0], C64::new(1.0, 0.0)));
        // F = [1], so h = 1*·Σ·1 = Σ.
        let paths = single_path(Point::new(1.0, 0.0), Point::new(1.0, 0.0), C64::new(0.0, 2.0));
        let h = assemble_channel(&[o], &o, &paths, 1.0).unwrap();
        assert!(close(h[0], C64::new(0.0, 2.0)));
    }

    #[test]
    fn antenna_permutation_permutes_channel() {
        let paths = PathSet::new(
            vec![0.3, 1.1],
            vec![0.7, 2.0],
            vec![0.4],
            vec![1.5],
            DMatrix::from_row_slice(2, 1, &[C64::new(0.3, -0.2), C64::new(-1.0, 0.5)]),
        )
        .unwrap();
        let t = [Point::new(0.1, 0.2), Point::new(-1.0, 0.7), Point::new(2.0, -0.4)];
        let r = Point::new(0.3, 0.1);
        let h = assemble_channel(&t, &r, &paths, 1.0).unwrap();
        let permuted = [t[2], t[0], t[1]];
        let hp = assemble_channel(&permuted, &r, &paths, 1.0).unwrap();
        assert_eq!(hp[0], h[2]);
        assert_eq!(hp[1], h[0]);
        assert_eq!(hp[2], h[1]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let err = PathSet::new(
            vec![0.1],
            vec![0.2],
            vec![0.3, 0.4],
            vec![0.5, 0.6],
            DMatrix::zeros(1, 1),
        );
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = ScenarioConfig::default();
        let a = generate_scenario(&cfg).unwrap();
        let b = generate_scenario(&cfg).unwrap();
        assert_eq!(a, b);
        let mut other = cfg.clone();
        other.rng_seed += 1;
        assert_ne!(generate_scenario(&other).unwrap().paths, a.paths);
    }

    #[test]
    fn default_grid_respects_min_distance() {
        let cfg = ScenarioConfig::default();
        let s = generate_scenario(&cfg).unwrap();
        assert_eq!(s.initial.bs.len(), 16);
        for (i, a) in s.initial.bs.iter().enumerate() {
            assert!(cfg.tx_region.contains(a, 0.0));
            for b in &s.initial.bs[i + 1..] {
                assert!((a - b).norm() >= cfg.min_distance);
            }
        }
    }

    #[test]
    fn random_init_is_feasible() {
        let mut cfg = ScenarioConfig::default();
        cfg.random_init = true;
        let s = generate_scenario(&cfg).unwrap();
        assert!(min_pairwise_distance(&s.initial.bs) >= cfg.min_distance);
        for (k, r) in s.initial.users.iter().enumerate() {
            assert!(cfg.rx_regions.get(k).contains(r, 0.0));
        }
    }

    #[test]
    fn zero_users_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.num_users = 0;
        assert!(generate_scenario(&cfg).is_err());
    }

    #[test]
    fn path_set_archive_round_trip() {
        let s = generate_scenario(&ScenarioConfig::default()).unwrap();
        let json = serde_json::to_string(&s.paths[0]).unwrap();
        assert!(json.contains("\"sigma\":[["));
        let back: PathSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s.paths[0]);
    }
}
