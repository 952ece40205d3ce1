use std::path::Path;
use std::process::{Command, Output};

fn fracvar(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracvar"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

const MODEL: &[&str] = &["--alpha", "0.3", "--beta", "1.5", "--k", "2", "--function", "cos:1"];

#[test]
fn regime_reports_clt_rate() {
    let dir = tempfile::tempdir().unwrap();
    let v = json(&fracvar(dir.path(), &[&["regime"], MODEL].concat()));
    assert_eq!(v["weak"], "CLT");
    assert!((v["hurst"].as_f64().unwrap() - (0.3 + 1.0 / 1.5)).abs() < 1e-12);
}

#[test]
fn simulate_then_vstat_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sim = fracvar(dir.path(), &[&["--seed", "7", "simulate", "--n", "256", "--substeps", "32"], MODEL].concat());
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    let csv = dir.path().join("increments.csv");
    assert!(csv.exists());
    let input = csv.to_str().unwrap();
    let v = json(&fracvar(dir.path(), &[&["vstat", "--input", input, "--n", "256", "--case", "ii"], MODEL].concat()));
    let value = v["value"].as_f64().unwrap();
    assert!(value > 0.0 && value <= 1.0, "cos statistic out of range: {value}");

    let again = dir.path().join("again");
    let sim2 = fracvar(&again, &[&["--seed", "7", "simulate", "--n", "256", "--substeps", "32"], MODEL].concat());
    assert!(sim2.status.success());
    assert_eq!(std::fs::read(&csv).unwrap(), std::fs::read(again.join("increments.csv")).unwrap());
}

#[test]
fn experiment_and_rerun_report() {
    let dir = tempfile::tempdir().unwrap();
    let run = fracvar(dir.path(), &["experiment", "--preset", "lln-iii"]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(dir.path().join("results.csv").exists());
    let report = fracvar(dir.path(), &["report", "--rerun"]);
    assert_eq!(report.status.code(), Some(0), "{}", String::from_utf8_lossy(&report.stderr));
}

#[test]
fn invalid_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = fracvar(dir.path(), &["regime", "--alpha=-1", "--beta", "1.5", "--k", "2", "--function", "cos:1"]);
    assert_eq!(out.status.code(), Some(1));
    let unknown = fracvar(dir.path(), &["experiment", "--preset", "nope"]);
    assert_eq!(unknown.status.code(), Some(1));
}
