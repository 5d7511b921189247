//! Seeded Monte Carlo trials over one configuration.

use serde::Serialize;

use crate::channel::{generate_scenario, Scenario};
use crate::driver::{run_bcd, BaselineKind, RunReport};
use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};
use crate::scenario::ScenarioConfig;

/// Sample mean and (n−1) standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Stat {
        let n = xs.len();
        if n == 0 {
            return Stat {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stat { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineSummary {
    pub baseline: BaselineKind,
    pub trials: usize,
    pub final_wsr: Stat,
    pub total_ms: Stat,
    pub bs_block_ms: Stat,
    pub iterations: Stat,
    pub converged: usize,
}

/// One trial: the scenario and a report per requested baseline.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub trial: usize,
    pub scenario: Scenario,
    pub reports: Vec<RunReport>,
}

#[derive(Debug, Clone)]
pub struct MonteCarloReport {
    pub baselines: Vec<BaselineKind>,
    pub trials: Vec<TrialOutcome>,
    pub summaries: Vec<BaselineSummary>,
}

impl MonteCarloReport {
    pub fn summary(&self, baseline: BaselineKind) -> Option<&BaselineSummary> {
        self.summaries.iter().find(|s| s.baseline == baseline)
    }
}

/// Seed used for trial `t`: consecutive offsets from the configured seed.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    base.wrapping_add(trial as u64)
}

pub fn summarize(baselines: &[BaselineKind], trials: &[TrialOutcome]) -> Vec<BaselineSummary> {
    baselines
        .iter()
        .enumerate()
        .map(|(i, &baseline)| {
            let pick = |f: &dyn Fn(&RunReport) -> f64| trials.iter().map(|t| f(&t.reports[i])).collect::<Vec<_>>();
            BaselineSummary {
                baseline,
                trials: trials.len(),
                final_wsr: Stat::of(&pick(&|r| r.final_wsr())),
                total_ms: Stat::of(&pick(&|r| r.total_ms)),
                bs_block_ms: Stat::of(&pick(&|r| r.mean_bs_block_ms())),
                iterations: Stat::of(&pick(&|r| r.iterations.len() as f64)),
                converged: trials.iter().filter(|t| t.reports[i].converged).count(),
            }
        })
        .collect()
}

pub fn run_monte_carlo(config: &ScenarioConfig, baselines: &[BaselineKind], trials: usize) -> Result<MonteCarloReport> {
    run_monte_carlo_with(config, baselines, trials, Execution::available())
}

/// Every baseline in a trial sees the same scenario.
pub fn run_monte_carlo_with(
    config: &ScenarioConfig,
    baselines: &[BaselineKind],
    trials: usize,
    exec: Execution,
) -> Result<MonteCarloReport> {
    if trials == 0 {
        return Err(Error::config("trials", "must be at least 1"));
    }
    if baselines.is_empty() {
        return Err(Error::config("baselines", "at least one baseline is required"));
    }
    config.validate()?;
    let outcomes = map_indexed(trials, exec, |trial| -> Result<TrialOutcome> {
        let mut cfg = config.clone();
        cfg.rng_seed = trial_seed(config.rng_seed, trial);
        let scenario = generate_scenario(&cfg)?;
        let reports = baselines
            .iter()
            .map(|&b| run_bcd(&scenario, &cfg.solver, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(TrialOutcome {
            trial,
            scenario,
            reports,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(MonteCarloReport {
        baselines: baselines.to_vec(),
        summaries: summarize(baselines, &outcomes),
        trials: outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::PerUser;

    fn small() -> ScenarioConfig {
        let mut c = ScenarioConfig::default();
        c.num_bs_antennas = 3;
        c.num_users = 2;
        c.tx_paths = PerUser::Same(2);
        c.rx_paths = PerUser::Same(2);
        c.rng_seed = 11;
        c.solver.max_iters = 15;
        c
    }

    #[test]
    fn stat_matches_hand_values() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(Stat::of(&[3.0]).std, 0.0);
    }

    #[test]
    fn single_trial_is_a_single_run() {
        let c = small();
        let mc = run_monte_carlo(&c, &[BaselineKind::TmaRma], 1).unwrap();
        let direct = run_bcd(&generate_scenario(&c).unwrap(), &c.solver, BaselineKind::TmaRma).unwrap();
        assert_eq!(mc.trials[0].reports[0].without_timings(), direct.without_timings());
        assert_eq!(mc.summaries[0].final_wsr.mean, direct.final_wsr());
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let c = small();
        let b = [BaselineKind::TmaRma, BaselineKind::Fpa];
        let s = run_monte_carlo_with(&c, &b, 4, Execution::Sequential).unwrap();
        let p = run_monte_carlo_with(&c, &b, 4, Execution::Parallel).unwrap();
        for (x, y) in s.trials.iter().zip(&p.trials) {
            assert_eq!(x.trial, y.trial);
            for (a, b) in x.reports.iter().zip(&y.reports) {
                assert_eq!(a.without_timings(), b.without_timings());
            }
        }
        assert_eq!(s.summaries[0].final_wsr, p.summaries[0].final_wsr);
    }

    #[test]
    fn aggregation_ignores_trial_order() {
        let c = small();
        let b = [BaselineKind::TmaRma];
        let mut r = run_monte_carlo_with(&c, &b, 4, Execution::Sequential).unwrap();
        let forward = summarize(&b, &r.trials)[0].final_wsr.mean;
        r.trials.reverse();
        let backward = summarize(&b, &r.trials)[0].final_wsr.mean;
        assert!((forward - backward).abs() <= 1e-12 * forward.abs());
    }
}
