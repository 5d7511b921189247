//! Weighted sum-rate maximization for multiuser MIMO downlinks with movable
//! antennas at the base station and at every user.
//!
//! The optimizer alternates between three blocks: WMMSE beamforming under a
//! total power budget, majorization-minimization steps for the BS antenna
//! positions (either over a shared region with minimum spacing, solved as a
//! tiny QP, or inside disjoint per-antenna cells, solved in closed form),
//! and closed-form majorization-minimization steps for user positions.
//!
//! ```no_run
//! use mawsr::{channel::generate_scenario, driver::{run_bcd, BaselineKind}, scenario::ScenarioConfig};
//!
//! let config = ScenarioConfig::default();
//! let scenario = generate_scenario(&config)?;
//! let report = run_bcd(&scenario, &config.solver, BaselineKind::TmaRma)?;
//! println!("{:.3} nats/s/Hz", report.final_wsr());
//! # Ok::<(), mawsr::Error>(())
//! ```

#![cfg_attr(test, allow(clippy::field_reassign_with_default))]

pub mod beamforming;
pub mod bs_position;
pub mod channel;
pub mod driver;
pub mod error;
pub mod geometry;
pub mod mm;
pub mod montecarlo;
pub mod oracle;
pub mod par;
pub mod qp;
pub mod scenario;
pub mod user_position;
pub mod verify;

pub use error::{Error, Result};

/// Slack allowed when checking region, cell and spacing constraints.
pub const FEASIBILITY_TOL: f64 = 1e-9;
