//! `mawsr`: run WSR experiments and the built-in verification suites.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 verification
//! failure.

mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mawsr::driver::BaselineKind;
use mawsr::montecarlo::{run_monte_carlo, trial_seed, Stat};
use mawsr::scenario::{
    load_config, preset_by_name, preset_figures, ArchiveEntry, ExperimentPreset, MovementMode, ScenarioArchive,
};
use mawsr::verify::{run_suite, Suite};

use output::{RunKey, Summary, SummaryRow, Writers};

#[derive(Parser)]
#[command(
    name = "mawsr",
    version,
    about = "Weighted sum-rate optimization with movable antennas"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset experiment or a single configuration.
    Run(RunArgs),
    /// Run randomized property checks against reference implementations.
    Verify(VerifyArgs),
    /// List the built-in presets.
    Presets,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["config", "preset"]))]
struct RunArgs {
    /// JSON scenario configuration; missing fields take defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in experiment (see `mawsr presets`).
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Base RNG seed; trial t uses seed + t.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo trials per sweep point.
    #[arg(long)]
    trials: Option<usize>,
    /// Restrict to one movement mode.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<MovementMode>,
    /// Baseline to run; repeat for several. Defaults to the preset's list.
    #[arg(long = "baseline", value_name = "NAME", value_parser = parse_baseline)]
    baselines: Vec<BaselineKind>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Surrogate,
    Gradient,
    Monotonicity,
    Qp,
    Grid,
    All,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    suite: SuiteArg,
    /// Random instances per suite (runs for `monotonicity`, seeds for `grid`).
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_mode(s: &str) -> Result<MovementMode, String> {
    s.parse()
}

fn parse_baseline(s: &str) -> Result<BaselineKind, String> {
    s.parse()
}

enum Failure {
    Runtime(String),
    Verification,
}

fn runtime(stage: &str) -> impl Fn(String) -> Failure + '_ {
    move |e| Failure::Runtime(format!("{stage}: {e}"))
}

fn experiment(args: &RunArgs) -> Result<ExperimentPreset, Failure> {
    let mut preset = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let base = load_config(path).map_err(|e| runtime("loading config")(e.to_string()))?;
            ExperimentPreset {
                name: "custom".into(),
                modes: vec![base.mode],
                base,
                sweep: None,
                baselines: vec![BaselineKind::TmaRma],
                trials: 1,
            }
        }
        (None, Some(name)) => preset_by_name(name).ok_or_else(|| {
            let names: Vec<_> = preset_figures().into_iter().map(|p| p.name).collect();
            Failure::Runtime(format!(
                "selecting preset: unknown preset `{name}` (available: {})",
                names.join(", ")
            ))
        })?,
        (None, None) => unreachable!("clap enforces --config or --preset"),
    };
    if let Some(seed) = args.seed {
        preset.base.rng_seed = seed;
    }
    if let Some(trials) = args.trials {
        preset.trials = trials;
    }
    if let Some(mode) = args.mode {
        preset.modes = vec![mode];
    }
    if !args.baselines.is_empty() {
        preset.baselines = args.baselines.clone();
    }
    Ok(preset)
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let preset = experiment(&args)?;
    let points = preset
        .expand()
        .map_err(|e| runtime("expanding experiment")(e.to_string()))?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| runtime("creating output directory")(format!("{}: {e}", args.out.display())))?;

    let sweep_variable = preset.sweep.as_ref().map(|s| s.variable.as_str()).unwrap_or("");
    let mut writers = Writers::create(&args.out).map_err(runtime("opening outputs"))?;
    let mut archive = ScenarioArchive::default();
    let mut rows = Vec::new();
    let mut run_id = 0;
    for point in &points {
        let mc = run_monte_carlo(&point.config, &preset.baselines, preset.trials)
            .map_err(|e| runtime("running trials")(e.to_string()))?;
        for outcome in &mc.trials {
            let seed = trial_seed(point.config.rng_seed, outcome.trial);
            for report in &outcome.reports {
                let key = RunKey {
                    run_id,
                    sweep_variable,
                    sweep_value: point.value,
                    trial: outcome.trial,
                    seed,
                };
                writers.write_run(&key, report).map_err(runtime("writing trace"))?;
                run_id += 1;
            }
            archive.entries.push(ArchiveEntry {
                sweep_value: point.value,
                mode: point.mode,
                trial: outcome.trial,
                scenario: outcome.scenario.clone(),
            });
        }
        for (i, summary) in mc.summaries.iter().enumerate() {
            let initial: Vec<f64> = mc.trials.iter().map(|t| t.reports[i].initial_wsr).collect();
            rows.push(SummaryRow::new(
                point.value,
                point.mode.as_str(),
                summary,
                Stat::of(&initial),
            ));
            eprintln!(
                "{}{} {} {}: WSR {:.4} ± {:.4} nats over {} trials",
                sweep_variable,
                point.value.map(|v| format!("={v}")).unwrap_or_default(),
                point.mode.as_str(),
                summary.baseline,
                summary.final_wsr.mean,
                summary.final_wsr.std,
                summary.trials
            );
        }
    }
    writers.finish().map_err(runtime("writing trace"))?;
    let summary = Summary {
        preset: preset.name.clone(),
        sweep_variable: preset.sweep.as_ref().map(|s| s.variable.as_str().to_string()),
        base_seed: preset.base.rng_seed,
        rows,
    };
    output::write_json(&summary, &args.out.join("summary.json")).map_err(runtime("writing summary"))?;
    output::write_json(&preset, &args.out.join("preset.json")).map_err(runtime("writing preset"))?;
    archive
        .save(args.out.join("scenario.json"))
        .map_err(|e| runtime("writing scenario archive")(e.to_string()))?;
    eprintln!("wrote {run_id} runs to {}", args.out.display());
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<(), Failure> {
    let suites: Vec<Suite> = match args.suite {
        SuiteArg::Surrogate => vec![Suite::Surrogate],
        SuiteArg::Gradient => vec![Suite::Gradient],
        SuiteArg::Monotonicity => vec![Suite::Monotonicity],
        SuiteArg::Qp => vec![Suite::Qp],
        SuiteArg::Grid => vec![Suite::Grid],
        SuiteArg::All => Suite::ALL.to_vec(),
    };
    let mut ok = true;
    for suite in suites {
        let r = run_suite(suite, args.samples, args.seed).map_err(|e| runtime(suite.as_str())(e.to_string()))?;
        println!(
            "{} {}: {}/{} passed (worst {:.3e}, tolerance {:.0e})",
            if r.ok() { "PASS" } else { "FAIL" },
            suite.as_str(),
            r.passed,
            r.total,
            r.worst,
            r.tolerance
        );
        ok &= r.ok();
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn cmd_presets() {
    for p in preset_figures() {
        let sweep = p
            .sweep
            .as_ref()
            .map(|s| format!("{} ∈ {:?}", s.variable.as_str(), s.values))
            .unwrap_or_else(|| "no sweep".into());
        let baselines: Vec<_> = p.baselines.iter().map(|b| b.as_str()).collect();
        let modes: Vec<_> = p.modes.iter().map(|m| m.as_str()).collect();
        println!(
            "{:<12} {sweep}; baselines {}; modes {}; {} trials",
            p.name,
            baselines.join(","),
            modes.join(","),
            p.trials
        );
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Presets => {
            cmd_presets();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Verification) => ExitCode::from(3),
    }
}
