//! Experiment configuration: validation, defaults, JSON persistence and the
//! built-in experiment presets.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::Scenario;
use crate::driver::{BaselineKind, BcdOptions};
use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};

/// Convert dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// A per-user setting: either one value shared by every user or an explicit
/// list with one entry per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerUser<T> {
    Same(T),
    Each(Vec<T>),
}

impl<T: Clone> PerUser<T> {
    /// Value for user `k`. Panics if an explicit list is too short, which
    /// [`ScenarioConfig::validate`] rules out.
    pub fn get(&self, k: usize) -> T {
        match self {
            PerUser::Same(v) => v.clone(),
            PerUser::Each(v) => v[k].clone(),
        }
    }

    pub fn iter(&self, count: usize) -> impl Iterator<Item = T> + '_ {
        (0..count).map(move |k| self.get(k))
    }

    fn check_len(&self, count: usize, field: &str) -> Result<()> {
        match self {
            PerUser::Each(v) if v.len() != count => Err(Error::config(
                field,
                format!("has {} entries for {count} users", v.len()),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MovementMode {
    /// Every BS antenna may move anywhere in the transmit region subject to
    /// the minimum spacing.
    General,
    /// Each BS antenna is confined to its own cell.
    Planar,
}

impl MovementMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            MovementMode::General => "general",
            MovementMode::Planar => "planar",
        }
    }
}

impl std::str::FromStr for MovementMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "general" => Ok(MovementMode::General),
            "planar" => Ok(MovementMode::Planar),
            other => Err(format!("unknown mode `{other}` (expected general|planar)")),
        }
    }
}

/// Variance of each complex Gaussian path-response entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathGainScaling {
    /// `1/L_t`: expected channel gain independent of the path count.
    InverseTxPaths,
    Unit,
}

/// All physical and algorithmic parameters of one experiment.
///
/// Distances are in meters, powers in dBm. Missing JSON fields take the
/// defaults of [`ScenarioConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_bs_antennas: usize,
    pub num_users: usize,
    pub tx_paths: PerUser<usize>,
    pub rx_paths: PerUser<usize>,
    pub wavelength: f64,
    pub min_distance: f64,
    pub tx_region: Rect,
    pub rx_regions: PerUser<Rect>,
    pub noise_power_dbm: f64,
    pub max_power_dbm: f64,
    pub weights: PerUser<f64>,
    pub mode: MovementMode,
    /// Explicit per-antenna cells for planar mode; derived from the transmit
    /// region when absent.
    pub planar_cells: Option<Vec<Rect>>,
    pub rng_seed: u64,
    pub path_gain_scaling: PathGainScaling,
    /// Elevation and azimuth angles are drawn uniformly from this interval.
    pub angle_range: [f64; 2],
    /// Random feasible initial placement instead of the deterministic grid.
    pub random_init: bool,
    pub solver: BcdOptions,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let lambda = 1.0;
        ScenarioConfig {
            num_bs_antennas: 16,
            num_users: 4,
            tx_paths: PerUser::Same(4),
            rx_paths: PerUser::Same(4),
            wavelength: lambda,
            min_distance: lambda / 2.0,
            tx_region: Rect::centered_square(5.0 * lambda),
            rx_regions: PerUser::Same(Rect::centered_square(2.0 * lambda)),
            noise_power_dbm: 15.0,
            max_power_dbm: 30.0,
            weights: PerUser::Same(1.0),
            mode: MovementMode::General,
            planar_cells: None,
            rng_seed: 0,
            path_gain_scaling: PathGainScaling::InverseTxPaths,
            angle_range: [0.0, PI],
            random_init: false,
            solver: BcdOptions::default(),
        }
    }
}

impl ScenarioConfig {
    /// Noise power σ² in watts.
    pub fn sigma2(&self) -> f64 {
        dbm_to_watts(self.noise_power_dbm)
    }

    /// Transmit power budget in watts.
    pub fn p_max(&self) -> f64 {
        dbm_to_watts(self.max_power_dbm)
    }

    pub fn alpha(&self) -> Vec<f64> {
        self.weights.iter(self.num_users).collect()
    }

    /// Per-antenna cells: the explicit list if given, else the default grid
    /// partition of the transmit region. Also serves as the initial layout.
    pub fn bs_cells(&self) -> Result<Vec<Rect>> {
        match &self.planar_cells {
            Some(cells) if self.mode == MovementMode::Planar => Ok(cells.clone()),
            _ => grid_cells(&self.tx_region, self.num_bs_antennas, self.min_distance),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.num_bs_antennas;
        let k = self.num_users;
        if m == 0 {
            return Err(Error::config("num_bs_antennas", "must be at least 1"));
        }
        if k == 0 {
            return Err(Error::config("num_users", "must be at least 1"));
        }
        self.tx_paths.check_len(k, "tx_paths")?;
        self.rx_paths.check_len(k, "rx_paths")?;
        self.rx_regions.check_len(k, "rx_regions")?;
        self.weights.check_len(k, "weights")?;
        if self.tx_paths.iter(k).any(|l| l == 0) {
            return Err(Error::config("tx_paths", "every user needs at least one path"));
        }
        if self.rx_paths.iter(k).any(|l| l == 0) {
            return Err(Error::config("rx_paths", "every user needs at least one path"));
        }
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::config("wavelength", "must be positive and finite"));
        }
        if !(self.min_distance >= 0.0 && self.min_distance.is_finite()) {
            return Err(Error::config("min_distance", "must be non-negative and finite"));
        }
        if !self.noise_power_dbm.is_finite() {
            return Err(Error::config("noise_power_dbm", "must be finite"));
        }
        if !self.max_power_dbm.is_finite() {
            return Err(Error::config("max_power_dbm", "must be finite"));
        }
        if self.weights.iter(k).any(|a| !(a >= 0.0 && a.is_finite())) {
            return Err(Error::config("weights", "must be non-negative and finite"));
        }
        if !self.tx_region.is_well_formed() {
            return Err(Error::config("tx_region", "bounds must be finite and ordered"));
        }
        if self.rx_regions.iter(k).any(|r| !r.is_well_formed()) {
            return Err(Error::config("rx_regions", "bounds must be finite and ordered"));
        }
        let [lo, hi] = self.angle_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::config("angle_range", "must be a finite ordered interval"));
        }
        if self.min_distance > self.tx_region.diagonal() {
            return Err(Error::Infeasible(format!(
                "min_distance {} exceeds the tx_region diagonal {}",
                self.min_distance,
                self.tx_region.diagonal()
            )));
        }
        self.solver.validate()?;
        let cells = self.bs_cells()?;
        if self.mode == MovementMode::Planar {
            check_cells(&cells, &self.tx_region, self.min_distance, m)?;
        }
        Ok(())
    }
}

fn check_cells(cells: &[Rect], region: &Rect, d: f64, m: usize) -> Result<()> {
    if cells.len() != m {
        return Err(Error::config(
            "planar_cells",
            format!("has {} cells for {m} antennas", cells.len()),
        ));
    }
    for (i, c) in cells.iter().enumerate() {
        if !c.is_well_formed() {
            return Err(Error::config("planar_cells", format!("cell {i} is malformed")));
        }
        if !region.contains_rect(c, 0.0) {
            return Err(Error::config("planar_cells", format!("cell {i} leaves tx_region")));
        }
        for (j, o) in cells.iter().enumerate().skip(i + 1) {
            let gap = c.distance_to(o);
            if gap < d - crate::FEASIBILITY_TOL {
                return Err(Error::config(
                    "planar_cells",
                    format!("cells {i} and {j} are {gap} apart, below D = {d}"),
                ));
            }
        }
    }
    Ok(())
}

/// Partition `region` into a `cols × rows` grid of equal cells separated by
/// gaps of exactly `d`, keeping the first `m` cells in row-major order.
///
/// The grid shape maximizes the smaller cell side. Cell centers double as
/// the deterministic initial BS layout; center spacing is `side + d ≥ d`.
pub fn grid_cells(region: &Rect, m: usize, d: f64) -> Result<Vec<Rect>> {
    if m == 0 {
        return Ok(Vec::new());
    }
    let (w, h) = (region.width(), region.height());
    let mut best: Option<(f64, usize, usize)> = None;
    for cols in 1..=m {
        let rows = m.div_ceil(cols);
        let cw = (w - (cols as f64 - 1.0) * d) / cols as f64;
        let ch = (h - (rows as f64 - 1.0) * d) / rows as f64;
        let side = cw.min(ch);
        if best.is_none_or(|(s, _, _)| side > s) {
            best = Some((side, cols, rows));
        }
    }
    let (side, cols, rows) = best.expect("m ≥ 1");
    if side < 0.0 {
        return Err(Error::Infeasible(format!(
            "cannot place {m} antennas with spacing {d} inside a {w}×{h} region"
        )));
    }
    let cw = (w - (cols as f64 - 1.0) * d) / cols as f64;
    let ch = (h - (rows as f64 - 1.0) * d) / rows as f64;
    Ok((0..m)
        .map(|i| {
            let (c, r) = ((i % cols) as f64, (i / cols) as f64);
            let x0 = region.x[0] + c * (cw + d);
            let y0 = region.y[0] + r * (ch + d);
            Rect::new(x0, x0 + cw, y0, y0 + ch)
        })
        .collect())
}

/// Read a JSON config. An empty file yields the defaults.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let config: ScenarioConfig = if text.trim().is_empty() {
        ScenarioConfig::default()
    } else {
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?
    };
    config.validate()?;
    Ok(config)
}

pub fn save_config(config: &ScenarioConfig, path: impl AsRef<Path>) -> Result<()> {
    write_json(config, path.as_ref())
}

pub(crate) fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One archived scenario, tagged with where it came from in an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub sweep_value: Option<f64>,
    pub mode: MovementMode,
    pub trial: usize,
    pub scenario: Scenario,
}

/// Every scenario an experiment ran, sufficient for exact replay.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioArchive {
    pub entries: Vec<ArchiveEntry>,
}

impl ScenarioArchive {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(self, path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVariable {
    #[serde(rename = "M")]
    NumBsAntennas,
    #[serde(rename = "D")]
    MinDistance,
    #[serde(rename = "P_max_dbm")]
    MaxPowerDbm,
}

impl SweepVariable {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepVariable::NumBsAntennas => "M",
            SweepVariable::MinDistance => "D",
            SweepVariable::MaxPowerDbm => "P_max_dbm",
        }
    }

    fn apply(&self, config: &mut ScenarioConfig, value: f64) -> Result<()> {
        match self {
            SweepVariable::NumBsAntennas => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::config("sweep", format!("M = {value} is not a positive integer")));
                }
                config.num_bs_antennas = value as usize;
                config.planar_cells = None;
            }
            SweepVariable::MinDistance => {
                config.min_distance = value;
                config.planar_cells = None;
            }
            SweepVariable::MaxPowerDbm => config.max_power_dbm = value,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

/// A named experiment: base configuration, optional one-parameter sweep,
/// the baselines and movement modes to compare, and the trial count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPreset {
    pub name: String,
    pub base: ScenarioConfig,
    pub sweep: Option<Sweep>,
    pub baselines: Vec<BaselineKind>,
    pub modes: Vec<MovementMode>,
    pub trials: usize,
}

/// Configuration for one sweep point and mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: Option<f64>,
    pub mode: MovementMode,
    pub config: ScenarioConfig,
}

impl ExperimentPreset {
    /// Expand the sweep and mode list into validated configs, in
    /// (sweep value, mode) order.
    pub fn expand(&self) -> Result<Vec<SweepPoint>> {
        let values: Vec<Option<f64>> = match &self.sweep {
            None => vec![None],
            Some(s) => {
                if s.values.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::config("sweep", "values must be strictly increasing"));
                }
                s.values.iter().copied().map(Some).collect()
            }
        };
        let mut out = Vec::new();
        for value in values {
            for &mode in &self.modes {
                let mut config = self.base.clone();
                config.mode = mode;
                if let (Some(v), Some(s)) = (value, &self.sweep) {
                    s.variable.apply(&mut config, v)?;
                }
                config.validate()?;
                out.push(SweepPoint { value, mode, config });
            }
        }
        Ok(out)
    }
}

/// Built-in experiments:
///
/// * `convergence`: WSR versus iteration, general and planar modes;
/// * `m-sweep`: WSR versus the number of BS antennas, all four baselines;
/// * `d-sweep`: WSR versus the minimum inter-antenna distance.
pub fn preset_figures() -> Vec<ExperimentPreset> {
    let base = ScenarioConfig::default();
    vec![
        ExperimentPreset {
            name: "convergence".into(),
            base: base.clone(),
            sweep: None,
            baselines: vec![BaselineKind::TmaRma],
            modes: vec![MovementMode::General, MovementMode::Planar],
            trials: 20,
        },
        ExperimentPreset {
            name: "m-sweep".into(),
            base: base.clone(),
            sweep: Some(Sweep {
                variable: SweepVariable::NumBsAntennas,
                values: vec![4.0, 8.0, 12.0, 16.0],
            }),
            baselines: BaselineKind::ALL.to_vec(),
            modes: vec![MovementMode::General],
            trials: 20,
        },
        ExperimentPreset {
            name: "d-sweep".into(),
            base,
            sweep: Some(Sweep {
                variable: SweepVariable::MinDistance,
                values: vec![0.25, 0.5, 0.75, 1.0],
            }),
            baselines: vec![BaselineKind::TmaRma],
            modes: vec![MovementMode::General, MovementMode::Planar],
            trials: 20,
        },
    ]
}

pub fn preset_by_name(name: &str) -> Option<ExperimentPreset> {
    preset_figures().into_iter().find(|p| p.name == name)
}

/// Centers of a set of rectangles.
pub fn centers(cells: &[Rect]) -> Vec<Point> {
    cells.iter().map(Rect::center).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn defaults_match_reference_setup() {
        let c = ScenarioConfig::default();
        assert_eq!(c.num_bs_antennas, 16);
        assert_eq!(c.wavelength, 1.0);
        assert_eq!(c.min_distance, 0.5);
        assert_eq!(c.tx_region.width(), 5.0);
        assert_eq!(c.tx_region.height(), 5.0);
        assert!((c.sigma2() - 10f64.powf(-1.5)).abs() < 1e-15);
        assert!((c.p_max() - 1.0).abs() < 1e-15);
        c.validate().unwrap();
    }

    #[test]
    fn empty_file_gives_defaults() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "   ").unwrap();
        assert_eq!(load_config(f.path()).unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, r#"{{"num_users": 2, "weights": [1.0, 2.0]}}"#).unwrap();
        let c = load_config(f.path()).unwrap();
        assert_eq!(c.num_users, 2);
        assert_eq!(c.alpha(), vec![1.0, 2.0]);
        assert_eq!(c.num_bs_antennas, 16);
    }

    #[test]
    fn save_load_round_trip() {
        let mut c = ScenarioConfig::default();
        c.num_users = 3;
        c.weights = PerUser::Each(vec![0.5, 1.0, 2.0]);
        c.mode = MovementMode::Planar;
        c.rng_seed = 99;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        save_config(&c, &p).unwrap();
        assert_eq!(load_config(&p).unwrap(), c);
    }

    #[test]
    fn errors_name_the_field() {
        let mut c = ScenarioConfig::default();
        c.weights = PerUser::Each(vec![1.0]);
        assert!(c.validate().unwrap_err().to_string().contains("weights"));
        let mut c = ScenarioConfig::default();
        c.wavelength = 0.0;
        assert!(c.validate().unwrap_err().to_string().contains("wavelength"));
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, r#"{{"num_userz": 2}}"#).unwrap();
        assert!(load_config(f.path()).unwrap_err().to_string().contains("num_userz"));
    }

    #[test]
    fn distance_beyond_diagonal_is_infeasible() {
        let mut c = ScenarioConfig::default();
        c.num_bs_antennas = 1;
        c.min_distance = 8.0;
        assert!(matches!(c.validate(), Err(Error::Infeasible(_))));
    }

    #[test]
    fn too_many_antennas_is_infeasible() {
        let mut c = ScenarioConfig::default();
        c.num_bs_antennas = 200;
        assert!(matches!(c.validate(), Err(Error::Infeasible(_))));
    }

    #[test]
    fn default_cells_are_4x4_with_gap_d() {
        let c = ScenarioConfig::default();
        let cells = grid_cells(&c.tx_region, 16, 0.5).unwrap();
        assert_eq!(cells.len(), 16);
        for cell in &cells {
            assert!((cell.width() - 0.875).abs() < 1e-12);
            assert!((cell.height() - 0.875).abs() < 1e-12);
        }
        check_cells(&cells, &c.tx_region, 0.5, 16).unwrap();
        assert!((cells[0].distance_to(&cells[1]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn overlapping_planar_cells_rejected() {
        let mut c = ScenarioConfig::default();
        c.num_bs_antennas = 2;
        c.mode = MovementMode::Planar;
        c.planar_cells = Some(vec![Rect::new(0.0, 1.0, 0.0, 1.0), Rect::new(1.2, 2.0, 0.0, 1.0)]);
        assert!(c.validate().unwrap_err().to_string().contains("planar_cells"));
    }

    #[test]
    fn presets_cover_the_three_experiments() {
        let presets = preset_figures();
        let names: Vec<_> = presets.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["convergence", "m-sweep", "d-sweep"]);
        let m = preset_by_name("m-sweep").unwrap();
        assert_eq!(m.baselines.len(), 4);
        for b in BaselineKind::ALL {
            assert!(m.baselines.contains(&b));
        }
        let d = preset_by_name("d-sweep").unwrap();
        assert!(d.sweep.as_ref().unwrap().values.contains(&0.5));
        for p in &presets {
            let pts = p.expand().unwrap();
            assert_eq!(pts, p.expand().unwrap());
            for pt in pts {
                pt.config.validate().unwrap();
            }
        }
    }

    #[test]
    fn non_increasing_sweep_rejected() {
        let mut p = preset_by_name("m-sweep").unwrap();
        p.sweep.as_mut().unwrap().values = vec![4.0, 4.0];
        assert!(p.expand().is_err());
    }
}
