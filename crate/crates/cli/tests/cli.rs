use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mawsr::channel::Scenario;
use mawsr::driver::{run_bcd, BaselineKind};
use mawsr::scenario::ScenarioArchive;

fn mawsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mawsr")).args(args).output().unwrap()
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn repeated_runs_write_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = mawsr(&[
            "run",
            "--preset",
            "convergence",
            "--seed",
            "7",
            "--trials",
            "2",
            "--out",
            &out_arg(dir),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for file in ["trace.csv", "scenario.json"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file} differs"
        );
    }
}

#[test]
fn trace_rows_are_ordered_and_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mawsr(&[
        "run",
        "--preset",
        "convergence",
        "--trials",
        "2",
        "--out",
        &out_arg(tmp.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut reader = csv::Reader::from_path(tmp.path().join("trace.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (run, iter, nats, bits) = (col("run_id"), col("iteration"), col("wsr_nats"), col("wsr_bits"));
    let mut last = (0usize, 0usize);
    for row in reader.records() {
        let row = row.unwrap();
        let key: (usize, usize) = (row[run].parse().unwrap(), row[iter].parse().unwrap());
        assert!(key > last, "{key:?} after {last:?}");
        last = key;
        let (n, b): (f64, f64) = (row[nats].parse().unwrap(), row[bits].parse().unwrap());
        assert_eq!(b, n / std::f64::consts::LN_2);
    }
    let timing = fs::read_to_string(tmp.path().join("timing.csv")).unwrap();
    assert!(timing.starts_with("run_id,iteration,beamforming_ms,bs_position_ms,user_position_ms,warmup"));
}

#[test]
fn archive_replays_the_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mawsr(&[
        "run",
        "--preset",
        "convergence",
        "--trials",
        "1",
        "--mode",
        "planar",
        "--out",
        &out_arg(tmp.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let archive = ScenarioArchive::load(tmp.path().join("scenario.json")).unwrap();
    let scenario: &Scenario = &archive.entries[0].scenario;
    let report = run_bcd(scenario, &scenario.config.solver, BaselineKind::TmaRma).unwrap();
    let trace = fs::read_to_string(tmp.path().join("trace.csv")).unwrap();
    let last = trace.lines().last().unwrap();
    let wsr: f64 = last.split(',').nth(8).unwrap().parse().unwrap();
    assert_eq!(wsr, report.final_wsr());
}

#[test]
fn m_sweep_has_one_summary_row_per_point_and_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mawsr(&[
        "run",
        "--preset",
        "m-sweep",
        "--trials",
        "1",
        "--out",
        &out_arg(tmp.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    let rows = summary["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4 * 4);
    let mut pairs: Vec<(String, String)> = rows
        .iter()
        .map(|r| {
            (
                r["sweep_value"].to_string(),
                r["baseline"].as_str().unwrap().to_string(),
            )
        })
        .collect();
    pairs.sort();
    pairs.dedup();
    assert_eq!(pairs.len(), 16);
}

#[test]
fn missing_config_names_the_path() {
    let o = mawsr(&["run", "--config", "/definitely/not/here.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/definitely/not/here.json"));
}

#[test]
fn invalid_config_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    fs::write(&path, r#"{"num_bs_antennas": 0}"#).unwrap();
    let o = mawsr(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--out",
        &out_arg(&tmp.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("num_bs_antennas"), "{}", stderr(&o));
}

#[test]
fn custom_config_runs_and_is_left_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("small.json");
    let text = r#"{"num_bs_antennas": 3, "num_users": 2, "solver": {"max_iters": 5}}"#;
    fs::write(&path, text).unwrap();
    let o = mawsr(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--baseline",
        "TMA-RMA",
        "--baseline",
        "FPA",
        "--out",
        &out_arg(&tmp.path().join("o")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&path).unwrap(), text);
    let summary = fs::read_to_string(tmp.path().join("o/summary.json")).unwrap();
    assert!(summary.contains("\"TMA-RMA\"") && summary.contains("\"FPA\""));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(mawsr(&["run"]).status.code(), Some(1));
    assert_eq!(
        mawsr(&["run", "--preset", "convergence", "--mode", "diagonal"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(mawsr(&["--help"]).status.code(), Some(0));
}

#[test]
fn unknown_suite_lists_valid_ones() {
    let o = mawsr(&["verify", "--suite", "nonsense"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    for s in ["surrogate", "gradient", "monotonicity", "qp", "grid", "all"] {
        assert!(err.contains(s), "{err}");
    }
}

#[test]
fn gradient_suite_passes_every_sample() {
    let o = mawsr(&["verify", "--suite", "gradient", "--samples", "100"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("gradient: 100/100 passed"));
}

#[test]
fn all_suites_run() {
    let o = mawsr(&["verify", "--suite", "all", "--samples", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(
        String::from_utf8_lossy(&o.stdout)
            .lines()
            .filter(|l| l.starts_with("PASS"))
            .count(),
        5
    );
}
