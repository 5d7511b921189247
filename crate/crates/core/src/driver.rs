//! Block coordinate descent over beamformers, BS positions and user
//! positions.
//!
//! Each outer iteration runs the beamforming block (WMMSE passes followed by
//! a receiver/weight refresh), then one MM sweep over the BS antennas, then
//! one MM step per user. Every block minimizes or majorize-minimizes the
//! same WMMSE objective, so the objective is non-increasing block by block
//! and the WSR recorded after each outer iteration is non-decreasing.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::beamforming::{
    initial_beamformers, mse_all, sinr, update_u, update_v, wmmse_objective, wmmse_step, wsr, BeamformerState,
};
use crate::bs_position::{update_position_general, update_position_planar, AntennaSubproblem};
use crate::channel::{PositionState, Scenario, C64};
use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};
use crate::mm::MajorizerBound;
use crate::scenario::MovementMode;
use crate::user_position::step_user;
use crate::FEASIBILITY_TOL;

/// Stopping rule and inner iteration counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcdOptions {
    pub max_iters: usize,
    /// Stop once `|ΔWSR| ≤ tol_rel·|WSR|` for `patience` consecutive
    /// iterations.
    pub tol_rel: f64,
    pub patience: usize,
    /// WMMSE passes per beamforming block.
    pub wmmse_inner: usize,
    /// MM sweeps over the BS antennas per position block.
    pub bs_inner: usize,
    /// MM steps per user per position block.
    pub user_inner: usize,
    pub majorizer: MajorizerBound,
}

impl Default for BcdOptions {
    fn default() -> Self {
        BcdOptions {
            max_iters: 200,
            tol_rel: 1e-5,
            patience: 3,
            wmmse_inner: 10,
            bs_inner: 1,
            user_inner: 1,
            majorizer: MajorizerBound::Trace,
        }
    }
}

impl BcdOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::config("solver.max_iters", "must be at least 1"));
        }
        if !(self.tol_rel >= 0.0 && self.tol_rel.is_finite()) {
            return Err(Error::config("solver.tol_rel", "must be non-negative and finite"));
        }
        if self.patience == 0 {
            return Err(Error::config("solver.patience", "must be at least 1"));
        }
        if self.wmmse_inner == 0 {
            return Err(Error::config("solver.wmmse_inner", "must be at least 1"));
        }
        Ok(())
    }
}

/// Which antenna positions are optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineKind {
    /// Movable antennas at both ends (the proposed design).
    #[serde(rename = "TMA-RMA")]
    TmaRma,
    /// Fixed BS antennas, movable user antennas.
    #[serde(rename = "TFPA-RMA")]
    TfpaRma,
    /// Movable BS antennas, fixed user antennas.
    #[serde(rename = "TMA-RFPA")]
    TmaRfpa,
    /// Fixed antennas everywhere.
    #[serde(rename = "FPA")]
    Fpa,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::TmaRma,
        BaselineKind::TfpaRma,
        BaselineKind::TmaRfpa,
        BaselineKind::Fpa,
    ];

    pub fn moves_bs(&self) -> bool {
        matches!(self, BaselineKind::TmaRma | BaselineKind::TmaRfpa)
    }

    pub fn moves_users(&self) -> bool {
        matches!(self, BaselineKind::TmaRma | BaselineKind::TfpaRma)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BaselineKind::TmaRma => "TMA-RMA",
            BaselineKind::TfpaRma => "TFPA-RMA",
            BaselineKind::TmaRfpa => "TMA-RFPA",
            BaselineKind::Fpa => "FPA",
        }
    }
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let key = s.to_ascii_uppercase().replace('_', "-");
        BaselineKind::ALL
            .into_iter()
            .find(|b| b.as_str() == key)
            .ok_or_else(|| format!("unknown baseline `{s}` (expected TMA-RMA|TFPA-RMA|TMA-RFPA|FPA)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Beamforming,
    BsPosition,
    UserPosition,
}

/// WMMSE objective after one block update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockObjective {
    pub iteration: usize,
    pub block: Block,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// WMMSE objective at the end of the iteration.
    pub wmmse_objective: f64,
    pub wsr_nats: f64,
    pub beamforming_ms: f64,
    pub bs_position_ms: f64,
    pub user_position_ms: f64,
    /// Worst `D − min_j ‖t_m − t_j‖` over every BS update this iteration
    /// (clamped at 0).
    pub distance_residual: f64,
    /// Worst excursion outside the allowed region or cell, any antenna.
    pub region_residual: f64,
    /// `Σ‖w_k‖² − P_max`, clamped at 0.
    pub power_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub baseline: BaselineKind,
    pub mode: MovementMode,
    pub initial_wsr: f64,
    pub iterations: Vec<IterationRecord>,
    pub block_objectives: Vec<BlockObjective>,
    pub positions: PositionState,
    pub beamformers: BeamformerState,
    pub converged: bool,
    pub total_ms: f64,
    pub qp_solves: usize,
    /// QPs where the active-set method hit its cap and enumeration took over.
    pub qp_fallbacks: usize,
}

impl RunReport {
    pub fn final_wsr(&self) -> f64 {
        self.iterations.last().map_or(self.initial_wsr, |r| r.wsr_nats)
    }

    /// Mean BS-position block time per iteration, skipping the first
    /// (warm-up) iteration when there is more than one.
    pub fn mean_bs_block_ms(&self) -> f64 {
        let skip = usize::from(self.iterations.len() > 1);
        let times: Vec<f64> = self.iterations.iter().skip(skip).map(|r| r.bs_position_ms).collect();
        times.iter().sum::<f64>() / times.len().max(1) as f64
    }

    /// Copy with all wall-clock fields zeroed, for reproducibility checks.
    pub fn without_timings(&self) -> RunReport {
        let mut r = self.clone();
        r.total_ms = 0.0;
        for it in &mut r.iterations {
            it.beamforming_ms = 0.0;
            it.bs_position_ms = 0.0;
            it.user_position_ms = 0.0;
        }
        r
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

struct Feasibility<'a> {
    mode: MovementMode,
    region: &'a Rect,
    cells: &'a [Rect],
    min_distance: f64,
}

impl Feasibility<'_> {
    fn allowed(&self, m: usize) -> &Rect {
        match self.mode {
            MovementMode::General => self.region,
            MovementMode::Planar => &self.cells[m],
        }
    }

    fn spacing_residual(&self, t: &[Point], m: usize) -> f64 {
        let nearest = t
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != m)
            .map(|(_, q)| (t[m] - q).norm())
            .fold(f64::INFINITY, f64::min);
        (self.min_distance - nearest).max(0.0)
    }

    fn residuals(&self, t: &[Point]) -> (f64, f64) {
        (0..t.len()).fold((0.0, 0.0), |(d, r), m| {
            (
                f64::max(d, self.spacing_residual(t, m)),
                f64::max(r, self.allowed(m).violation(&t[m])),
            )
        })
    }
}

fn objective(h: &DMatrix<C64>, bf: &BeamformerState, alpha: &[f64], sigma2: f64) -> Result<f64> {
    let value = wmmse_objective(&mse_all(h, &bf.w, &bf.u, sigma2), alpha, &bf.v);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numerical(format!("WMMSE objective is {value}")))
    }
}

/// Run the full alternating optimization on one scenario.
#[allow(clippy::needless_range_loop)]
pub fn run_bcd(scenario: &Scenario, opts: &BcdOptions, baseline: BaselineKind) -> Result<RunReport> {
    let started = Instant::now();
    let cfg = &scenario.config;
    cfg.validate()?;
    opts.validate()?;
    let alpha = cfg.alpha();
    let (sigma2, p_max) = (cfg.sigma2(), cfg.p_max());
    let lambda = cfg.wavelength;
    let cells = cfg.bs_cells()?;
    let feas = Feasibility {
        mode: cfg.mode,
        region: &cfg.tx_region,
        cells: &cells,
        min_distance: cfg.min_distance,
    };

    let mut pos = scenario.initial.clone();
    if pos.bs.len() != cfg.num_bs_antennas || pos.users.len() != cfg.num_users {
        return Err(Error::Shape(format!(
            "initial state has {} BS and {} user positions; config says {} and {}",
            pos.bs.len(),
            pos.users.len(),
            cfg.num_bs_antennas,
            cfg.num_users
        )));
    }
    let (d0, r0) = feas.residuals(&pos.bs);
    let user_excursion = pos
        .users
        .iter()
        .enumerate()
        .map(|(k, r)| cfg.rx_regions.get(k).violation(r))
        .fold(0.0, f64::max);
    if d0 > FEASIBILITY_TOL || r0 > FEASIBILITY_TOL || user_excursion > FEASIBILITY_TOL {
        return Err(Error::Infeasible(format!(
            "initial positions violate spacing by {d0}, BS region by {r0}, user regions by {user_excursion}"
        )));
    }

    let mut h = scenario.channel_matrix(&pos)?;
    let w0 = initial_beamformers(&h, p_max);
    let initial_wsr = wsr(&sinr(&h, &w0, sigma2), &alpha);
    let mut bf = BeamformerState {
        u: update_u(&h, &w0, sigma2),
        v: nalgebra::DVector::from_element(cfg.num_users, 1.0),
        w: w0,
    };

    let mut records = Vec::new();
    let mut blocks = Vec::new();
    let (mut qp_solves, mut qp_fallbacks) = (0, 0);
    let mut streak = 0;
    let mut converged = false;
    let mut prev_wsr = initial_wsr;

    for iteration in 1..=opts.max_iters {
        let t = Instant::now();
        for _ in 0..opts.wmmse_inner {
            bf = wmmse_step(&h, &bf.w, &alpha, sigma2, p_max)?;
        }
        bf.u = update_u(&h, &bf.w, sigma2);
        bf.v = update_v(&h, &bf.w, &bf.u, sigma2)?;
        let beamforming_ms = elapsed_ms(t);
        blocks.push(BlockObjective {
            iteration,
            block: Block::Beamforming,
            value: objective(&h, &bf, &alpha, sigma2)?,
        });

        let t = Instant::now();
        let mut distance_residual: f64 = 0.0;
        let mut region_residual: f64 = 0.0;
        if baseline.moves_bs() {
            for _ in 0..opts.bs_inner {
                for m in 0..cfg.num_bs_antennas {
                    let sub = AntennaSubproblem::new(m, scenario, &pos, &bf)?;
                    let t0 = pos.bs[m];
                    let surrogates = sub.surrogates(&t0, opts.majorizer);
                    let next = match cfg.mode {
                        MovementMode::Planar => update_position_planar(&surrogates, &t0, &cells[m]),
                        MovementMode::General => {
                            let step = update_position_general(
                                m,
                                &surrogates,
                                &pos.bs,
                                cfg.min_distance,
                                &cfg.tx_region,
                                lambda,
                            )?;
                            if let Some(qp) = &step.qp {
                                qp_solves += 1;
                                qp_fallbacks += usize::from(qp.used_fallback);
                            }
                            step.position
                        }
                    };
                    pos.bs[m] = next;
                    distance_residual = distance_residual.max(feas.spacing_residual(&pos.bs, m));
                    region_residual = region_residual.max(feas.allowed(m).violation(&next));
                }
            }
            h = scenario.channel_matrix(&pos)?;
        } else {
            let (d, r) = feas.residuals(&pos.bs);
            distance_residual = d;
            region_residual = r;
        }
        let bs_position_ms = elapsed_ms(t);
        blocks.push(BlockObjective {
            iteration,
            block: Block::BsPosition,
            value: objective(&h, &bf, &alpha, sigma2)?,
        });

        let t = Instant::now();
        if baseline.moves_users() {
            for _ in 0..opts.user_inner {
                pos.users = (0..cfg.num_users)
                    .map(|k| step_user(k, scenario, &pos, &bf, opts.majorizer))
                    .collect::<Result<Vec<_>>>()?;
            }
            h = scenario.channel_matrix(&pos)?;
        }
        for (k, r) in pos.users.iter().enumerate() {
            region_residual = region_residual.max(cfg.rx_regions.get(k).violation(r));
        }
        let user_position_ms = elapsed_ms(t);
        let wmmse = objective(&h, &bf, &alpha, sigma2)?;
        blocks.push(BlockObjective {
            iteration,
            block: Block::UserPosition,
            value: wmmse,
        });

        let wsr_nats = wsr(&sinr(&h, &bf.w, sigma2), &alpha);
        if !wsr_nats.is_finite() {
            return Err(Error::Numerical(format!("WSR is {wsr_nats} at iteration {iteration}")));
        }
        records.push(IterationRecord {
            iteration,
            wmmse_objective: wmmse,
            wsr_nats,
            beamforming_ms,
            bs_position_ms,
            user_position_ms,
            distance_residual,
            region_residual,
            power_residual: (bf.power() - p_max).max(0.0),
        });

        if (wsr_nats - prev_wsr).abs() <= opts.tol_rel * wsr_nats.abs() {
            streak += 1;
        } else {
            streak = 0;
        }
        prev_wsr = wsr_nats;
        if streak >= opts.patience {
            converged = true;
            break;
        }
    }

    Ok(RunReport {
        baseline,
        mode: cfg.mode,
        initial_wsr,
        iterations: records,
        block_objectives: blocks,
        positions: pos,
        beamformers: bf,
        converged,
        total_ms: elapsed_ms(started),
        qp_solves,
        qp_fallbacks,
    })
}
