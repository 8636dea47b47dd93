use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_powerlaw"));
    cmd.env_remove("POWERLAW_THREADS");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json_out(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn error_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is an error JSON")
}

#[test]
fn classify_case_two() {
    let v = json_out(&["classify", "--p", "4", "--q", "2", "--m", "0.5"]);
    assert_eq!(v["verdict"], "StrictLocalMin");
    assert_eq!(v["case"], 2);
    assert!(v.get("witness").is_none());
}

#[test]
fn classify_saddle_has_witness() {
    let v = json_out(&["classify", "--p", "4", "--q", "2", "--m", "0.9"]);
    assert_eq!(v["verdict"], "Saddle");
    assert_eq!(v["case"], 3);
    assert!(v["witness"]["energy_drop"].as_f64().unwrap() > 1e-12);
    // the witness measure is a valid measure file
    let atoms = serde_json::to_string(&v["witness"]["measure"]).unwrap();
    let mu = powerlaw::DiscreteMeasure::<f64>::from_json(&atoms).unwrap();
    assert!((mu.total_mass() - 1.0).abs() < 1e-12);
}

#[test]
fn classify_grid_csv() {
    let out = run(&["classify", "--q", "2", "--ps", "2.5,3,4", "--ms", "0.25,0.5"]);
    assert!(out.status.success());
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    assert_eq!(rdr.headers().unwrap().iter().take(5).collect::<Vec<_>>(), ["p", "q", "m", "verdict", "case"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 6);
    let p3_half = rows.iter().find(|r| &r[0] == "3" && &r[2] == "0.5").unwrap();
    assert_eq!(&p3_half[3], "StrictLocalMin");
    assert_eq!(&p3_half[4], "6");
}

#[test]
fn three_atom_energy_value() {
    let dir = TempDir::new().unwrap();
    let ex = write(&dir, "three.json", r#"{"atoms": [[0, 0.420137], [0.548674, 0.159726], [1.09735, 0.420137]]}"#);
    let v = json_out(&["energy", "--p", "2.5", "--q", "2.1", "--measure", s(&ex)]);
    assert!((v["energy"].as_f64().unwrap() + 0.0192448).abs() < 1e-6);
    assert_eq!(v["position_gradient"].as_array().unwrap().len(), 3);
    let star = json_out(&["energy", "--p", "2.5", "--q", "2.1", "--two-dirac", "0.5"]);
    assert!((star["energy"].as_f64().unwrap() + 0.0190476).abs() < 1e-6);
}

#[test]
fn wasserstein_quantile_example() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.json", r#"{"atoms": [[0, 0.5], [1, 0.5]]}"#);
    let b = write(&dir, "b.json", r#"{"atoms": [[0.5, 1]]}"#);
    for lambda in ["1", "2", "inf"] {
        let v = json_out(&["wasserstein", "--lambda", lambda, s(&a), s(&b)]);
        assert!((v["distance"].as_f64().unwrap() - 0.5).abs() < 1e-12, "lambda {lambda}");
    }
    assert_eq!(run(&["wasserstein", "--lambda", "0.5", s(&a), s(&b)]).status.code(), Some(1));
}

#[test]
fn minimize_round_trips_as_measure() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("min.json");
    let status = bin()
        .args(["minimize", "--p", "6", "--q", "2", "--atoms", "4", "--starts", "4", "--seed", "3", "--output", s(&out)])
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&out).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    assert!(v["converged"].is_boolean());
    assert_eq!(v["starts"], 4);
    // the report carries an `atoms` list, so it is itself a measure file
    let mu = powerlaw::DiscreteMeasure::<f64>::from_json(&text).unwrap();
    let back = json_out(&["energy", "--p", "6", "--q", "2", "--measure", s(&out)]);
    assert!((back["energy"].as_f64().unwrap() - v["energy"].as_f64().unwrap()).abs() < 1e-12);
    assert!(mu.len() <= 4);
}

#[test]
fn minimize_is_deterministic() {
    let args = ["minimize", "--p", "2.5", "--q", "2.1", "--atoms", "4", "--starts", "3", "--seed", "9"];
    let a = run(&args);
    let b = bin().args(args).env("POWERLAW_THREADS", "1").output().unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn simulate_csv_and_snapshots() {
    let dir = TempDir::new().unwrap();
    let init = write(&dir, "init.json", r#"{"atoms": [[0, 0.25], [0.3, 0.25], [0.7, 0.25], [1.2, 0.25]]}"#);
    let snaps = dir.path().join("snaps.jsonl");
    let out = run(&[
        "simulate", "--p", "4", "--q", "2", "--measure", s(&init), "--tmax", "2", "--snapshot-every", "200",
        "--snapshots", s(&snaps),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    assert_eq!(rdr.headers().unwrap(), vec!["time", "energy", "atom_count"]);
    let energies: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    assert!(energies.len() >= 2);
    assert!(energies.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    let lines: Vec<String> = fs::read_to_string(&snaps).unwrap().lines().map(String::from).collect();
    assert_eq!(lines.len(), energies.len());
    // each snapshot line is accepted back as a measure
    let first: Value = serde_json::from_str(&lines[0]).unwrap();
    assert_eq!(first["time"], 0.0);
    let mu = powerlaw::DiscreteMeasure::<f64>::from_json(&lines[0]).unwrap();
    assert_eq!(mu.len(), 4);
}

#[test]
fn simulate_json_summary() {
    let v = json_out(&["--format", "json", "simulate", "--p", "3", "--q", "2", "--two-dirac", "0.5", "--tmax", "1"]);
    assert_eq!(v["terminated"], "ResidualBelowTol");
    assert_eq!(v["final_measure"]["atoms"].as_array().unwrap().len(), 2);
}

#[test]
fn prop_test_reports_and_sharpness() {
    let v = json_out(&["prop-test", "--n", "1", "--M", "1", "--trials", "300", "--seed", "5"]);
    assert_eq!(v["violations"], 0);
    assert!(v["min_lhs"].as_f64().unwrap() >= -1e-10);
    let sharp = v["sharpness"].as_array().unwrap();
    assert_eq!(sharp.len(), 2);
    for ce in sharp {
        assert!(ce["counterexample"]["value"].as_f64().unwrap() < -1e-12);
    }
    let v2 = json_out(&["prop-test", "--n", "2", "--M", "0.5", "--trials", "50"]);
    assert_eq!(v2["violations"], 0);
    assert!(v2.get("sharpness").is_none());
}

#[test]
fn phase_scan_csv_and_json() {
    let out = run(&["phase-scan", "--q", "2", "--p-grid", "3.5,6", "--atoms", "4", "--starts", "4", "--seed", "1"]);
    assert!(out.status.success());
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    assert_eq!(
        rdr.headers().unwrap(),
        vec!["q", "p", "best_energy", "two_dirac_energy", "is_two_dirac_optimal", "best_atoms_json"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    let atoms: Vec<(f64, f64)> = serde_json::from_str(&rows[1][5]).unwrap();
    assert!(!atoms.is_empty());
    let v = json_out(&[
        "--format", "json", "phase-scan", "--q", "2", "--p-grid", "3.5,6", "--atoms", "4", "--starts", "4", "--seed", "1",
    ]);
    assert_eq!(v["points"].as_array().unwrap().len(), 2);
    assert!(v["threshold"]["p"].as_f64().is_some());
}

#[test]
fn thresholds_at_two() {
    let v = json_out(&["thresholds", "--q", "2", "--p", "3"]);
    assert!((v["p_lower"].as_f64().unwrap() - 3.0).abs() < 1e-9);
    assert!(v["f"].as_f64().unwrap().abs() < 1e-15);
    let qs = v["q_star"].as_f64().unwrap();
    assert!(qs > 2.41 && qs < 2.43);
    let above = json_out(&["thresholds", "--q", "2.5"]);
    assert!(above.get("p_lower").is_none());
}

#[test]
fn validation_errors_exit_one() {
    let cases: &[&[&str]] = &[
        &["frobnicate"],
        &["energy", "--p", "3", "--q", "2"],
        &["energy", "--p", "2", "--q", "3", "--two-dirac", "0.5"],
        &["energy", "--p", "3", "--q", "2", "--two-dirac", "0.5", "--bogus"],
        &["classify", "--p", "4", "--q", "2", "--m", "1.5"],
        &["classify", "--p", "4", "--q", "2", "--m", "0.5", "--ps", "3"],
        &["energy", "--p", "3", "--q", "2", "--measure", "/nonexistent/measure.json"],
        &["--format", "csv", "minimize", "--p", "3", "--q", "2"],
        &["--threads", "0", "thresholds", "--q", "2"],
    ];
    for args in cases {
        let out = run(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let err = error_of(&out);
        assert!(err["error"].is_string() && err["message"].is_string(), "{args:?}");
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn malformed_measure_file_exits_one() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.json", r#"{"atoms": [[0, -1]]}"#);
    let out = run(&["energy", "--p", "3", "--q", "2", "--measure", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    let junk = write(&dir, "junk.json", "not json");
    assert_eq!(run(&["energy", "--p", "3", "--q", "2", "--measure", s(&junk)]).status.code(), Some(1));
}

#[test]
fn numerical_failure_exits_two() {
    // a step so large the flow blows up
    let dir = TempDir::new().unwrap();
    let init = write(&dir, "init.json", r#"{"atoms": [[0, 0.5], [1.5, 0.5]]}"#);
    let out = run(&["simulate", "--p", "20", "--q", "2", "--measure", s(&init), "--dt", "10", "--tmax", "1e6"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(error_of(&out)["error"].is_string());
}

#[test]
fn help_and_version_exit_zero() {
    assert!(run(&["--help"]).status.success());
    assert!(run(&["--version"]).status.success());
    assert!(run(&["classify", "--help"]).status.success());
}
