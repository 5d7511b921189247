//! Output files of `mawsr run`.
//!
//! * `trace.csv`: one row per outer iteration per run, ordered by run id
//!   then iteration. Deterministic for a given preset and seed.
//! * `timing.csv`: wall-clock block times keyed by the same run id and
//!   iteration. The first iteration of every run is flagged as warm-up.
//! * `summary.json`: one row per (sweep value, mode, baseline).
//! * `scenario.json`: every generated scenario, for exact replay.
//! * `preset.json`: the experiment definition after flag overrides.

use std::fs;
use std::path::Path;

use mawsr::driver::RunReport;
use mawsr::montecarlo::{BaselineSummary, Stat};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct TraceRow<'a> {
    pub run_id: usize,
    pub sweep_variable: &'a str,
    pub sweep_value: Option<f64>,
    pub mode: &'a str,
    pub baseline: &'a str,
    pub trial: usize,
    pub seed: u64,
    pub iteration: usize,
    pub wsr_nats: f64,
    pub wsr_bits: f64,
    pub wmmse_objective: f64,
    pub distance_residual: f64,
    pub region_residual: f64,
    pub power_residual: f64,
}

#[derive(Debug, Serialize)]
pub struct TimingRow {
    pub run_id: usize,
    pub iteration: usize,
    pub beamforming_ms: f64,
    pub bs_position_ms: f64,
    pub user_position_ms: f64,
    /// First iteration of a run; leave out when comparing block times.
    pub warmup: bool,
}

/// Run metadata shared by every trace row of one run.
pub struct RunKey<'a> {
    pub run_id: usize,
    pub sweep_variable: &'a str,
    pub sweep_value: Option<f64>,
    pub trial: usize,
    pub seed: u64,
}

pub struct Writers {
    trace: csv::Writer<fs::File>,
    timing: csv::Writer<fs::File>,
}

impl Writers {
    pub fn create(dir: &Path) -> Result<Self, String> {
        let open = |name: &str| {
            let path = dir.join(name);
            csv::Writer::from_path(&path).map_err(|e| format!("{}: {e}", path.display()))
        };
        Ok(Writers {
            trace: open("trace.csv")?,
            timing: open("timing.csv")?,
        })
    }

    pub fn write_run(&mut self, key: &RunKey, report: &RunReport) -> Result<(), String> {
        for it in &report.iterations {
            self.trace
                .serialize(TraceRow {
                    run_id: key.run_id,
                    sweep_variable: key.sweep_variable,
                    sweep_value: key.sweep_value,
                    mode: report.mode.as_str(),
                    baseline: report.baseline.as_str(),
                    trial: key.trial,
                    seed: key.seed,
                    iteration: it.iteration,
                    wsr_nats: it.wsr_nats,
                    wsr_bits: it.wsr_nats / std::f64::consts::LN_2,
                    wmmse_objective: it.wmmse_objective,
                    distance_residual: it.distance_residual,
                    region_residual: it.region_residual,
                    power_residual: it.power_residual,
                })
                .map_err(|e| format!("trace.csv: {e}"))?;
            self.timing
                .serialize(TimingRow {
                    run_id: key.run_id,
                    iteration: it.iteration,
                    beamforming_ms: it.beamforming_ms,
                    bs_position_ms: it.bs_position_ms,
                    user_position_ms: it.user_position_ms,
                    warmup: it.iteration == 1,
                })
                .map_err(|e| format!("timing.csv: {e}"))?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), String> {
        self.trace.flush().map_err(|e| format!("trace.csv: {e}"))?;
        self.timing.flush().map_err(|e| format!("timing.csv: {e}"))
    }
}

#[derive(Debug, Serialize)]
pub struct SummaryRow {
    pub sweep_value: Option<f64>,
    pub mode: String,
    pub baseline: String,
    pub trials: usize,
    pub initial_wsr_nats: Stat,
    pub final_wsr_nats: Stat,
    pub final_wsr_bits: Stat,
    pub iterations: Stat,
    pub converged: usize,
    pub total_ms: Stat,
    pub bs_block_ms: Stat,
}

impl SummaryRow {
    pub fn new(sweep_value: Option<f64>, mode: &str, s: &BaselineSummary, initial: Stat) -> Self {
        SummaryRow {
            sweep_value,
            mode: mode.to_string(),
            baseline: s.baseline.to_string(),
            trials: s.trials,
            initial_wsr_nats: initial,
            final_wsr_nats: s.final_wsr,
            final_wsr_bits: Stat {
                mean: s.final_wsr.mean / std::f64::consts::LN_2,
                std: s.final_wsr.std / std::f64::consts::LN_2,
            },
            iterations: s.iterations,
            converged: s.converged,
            total_ms: s.total_ms,
            bs_block_ms: s.bs_block_ms,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub preset: String,
    pub sweep_variable: Option<String>,
    pub base_seed: u64,
    pub rows: Vec<SummaryRow>,
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), String> {
    let text = serde_json::to_string_pretty(value).map_err(|e| format!("{}: {e}", path.display()))?;
    fs::write(path, text + "\n").map_err(|e| format!("{}: {e}", path.display()))
}
