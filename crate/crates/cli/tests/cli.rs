use std::path::Path;
use std::process::{Command, Output};

use remlab::manifest::ExperimentManifest;
use remlab::{execute, run_experiment};

fn remlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_remlab"))
        .args(args)
        .env_remove("REMLAB_WORKERS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = r#"{
  "experiment": "free_energy",
  "env": {"alpha": 1.0, "n": 12},
  "betas": [0.0, 0.5, 2.0],
  "replicas": 4,
  "master_seed": 7,
  "checks": [{"kind": "mean_free_energy", "beta": 0.5, "tolerance": 0.2}]
}"#;

#[test]
fn zero_replicas_exits_with_code_2_and_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "m.json", &SMALL.replace("\"replicas\": 4", "\"replicas\": 0"));
    let out = remlab(&["run", &path]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 5, column 3: replicas"), "{err}");
}

#[test]
fn malformed_json_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "m.json", "{\n  \"experiment\": \"free_energy\",\n");
    assert_eq!(remlab(&["run", &path]).status.code(), Some(2));
    assert_eq!(remlab(&["run", "/nonexistent/m.json"]).status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "m.json", SMALL);
    let blocker = write(dir.path(), "file", "");
    let out = remlab(&["run", &path, "--output-dir", &format!("{blocker}/sub")]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn run_writes_every_artifact_and_honours_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "m.json", SMALL);
    let out_dir = dir.path().join("out");
    let out = remlab(&["run", &path, "--workers", "2", "--seed", "99", "--output-dir", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["results.csv", "overlay.csv", "manifest.resolved.json", "summary.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let resolved = std::fs::read_to_string(out_dir.join("manifest.resolved.json")).unwrap();
    let m = ExperimentManifest::from_json(&resolved).unwrap();
    assert_eq!(m.master_seed, 99);
    assert_eq!(m.workers, remlab::Workers::Fixed(2));
    let results = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert!(results.starts_with("beta,replica,log_z,free_energy\n"));
    assert_eq!(results.lines().count(), 1 + 3 * 4);
    assert!(!results.contains('\r'));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["master_seed"], 99);
    assert_eq!(summary["streams"]["energy_keys"].as_array().unwrap().len(), 4);
}

#[test]
fn failing_checks_exit_with_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "m.json", &SMALL.replace("0.2}", "1e-9}"));
    let out = remlab(&["run", &path, "--output-dir", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().contains("FAIL mean_free_energy"));
}

#[test]
fn worker_precedence_env_is_last() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "m.json", SMALL);
    let out_dir = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_remlab"))
        .args(["run", &path, "--output-dir", out_dir.to_str().unwrap()])
        .env("REMLAB_WORKERS", "3")
        .status()
        .unwrap();
    assert!(status.success());
    let m = ExperimentManifest::from_json(&std::fs::read_to_string(out_dir.join("manifest.resolved.json")).unwrap())
        .unwrap();
    assert_eq!(m.workers, remlab::Workers::Fixed(3));
    let bad = Command::new(env!("CARGO_BIN_EXE_remlab"))
        .args(["run", &path, "--output-dir", out_dir.to_str().unwrap()])
        .env("REMLAB_WORKERS", "zero")
        .status()
        .unwrap();
    assert_eq!(bad.code(), Some(2));
}

#[test]
fn theory_prints_the_three_quantities() {
    let out = remlab(&["theory", "1", "2"]);
    assert!(out.status.success());
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        format!(
            "free_energy_limit {:?}\ncritical_beta 1.0\nregime low_temperature\n",
            2.0 * std::f64::consts::LN_2
        )
    );
    assert_eq!(remlab(&["theory", "0.5", "1"]).status.code(), Some(2));
}

#[test]
fn csvs_do_not_depend_on_worker_count() {
    for experiment in [
        SMALL.to_string(),
        r#"{"experiment": "exceedance", "env": {"alpha": 1.0, "n": 14}, "replicas": 20, "master_seed": 3,
            "b_levels": [-1.0, 0.0]}"#
            .to_string(),
        r#"{"experiment": "pd_compare", "env": {"alpha": 1.0, "n": 12}, "betas": [2.0], "replicas": 6,
            "master_seed": 5, "pd": {"draws": 10}}"#
            .to_string(),
        r#"{"experiment": "marginals", "env": {"alpha": 2.0, "n": 15}, "betas": [0.3, 1.2], "replicas": 3,
            "master_seed": 1, "k_marginal": 3}"#
            .to_string(),
        r#"{"experiment": "rate_function", "env": {"alpha": 1.0, "n": 15}, "replicas": 3, "master_seed": 1,
            "intervals": [[0.1, 0.3], [null, 0.0]]}"#
            .to_string(),
    ] {
        let m = ExperimentManifest::from_json(&experiment).unwrap();
        assert_eq!(execute(&m, 1).unwrap(), execute(&m, 8).unwrap_or_else(|e| panic!("{e}")));
    }
}

#[test]
fn run_experiment_reports_the_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = ExperimentManifest::from_json(SMALL).unwrap();
    m.output_dir = dir.path().join("nested/deeper");
    let outcome = run_experiment(&m).unwrap();
    assert!(outcome.passed());
    assert_eq!(outcome.output_dir, m.output_dir);
    let csv = std::fs::read_to_string(m.output_dir.join("overlay.csv")).unwrap();
    assert_eq!(outcome.artifacts.file("overlay.csv"), Some(csv.as_str()));
}
