//! End-to-end runs of the binary: exit codes, output files, reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_replica-ecc"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

fn run(args: &[&str], cfg: &Path) -> Output {
    bin().args(args).arg("--config").arg(cfg).output().unwrap()
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("run.json");
    fs::write(&path, json).unwrap();
    path
}

#[test]
fn analyze_defaults_to_text() {
    let out = bin().arg("analyze").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("BCH(2312,2048,22)"), "{text}");
    assert!(text.contains("27.0%"), "{text}");
}

#[test]
fn sweep_csv_is_byte_identical_and_has_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("plots").join("fig.csv");
    let mut first = Vec::new();
    for _ in 0..2 {
        let out = bin()
            .args(["sweep", "--config"])
            .arg(config("sweep_t.json"))
            .arg("--out")
            .arg(&out_path)
            .output()
            .unwrap();
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let files: Vec<Vec<u8>> = ["fig_baseline.csv", "fig_pb3.csv", "fig_ec5_3.csv"]
            .iter()
            .map(|f| fs::read(dir.path().join("plots").join(f)).unwrap())
            .collect();
        if first.is_empty() {
            first = files;
        } else {
            assert_eq!(first, files);
        }
    }
    let csv = String::from_utf8(first[1].clone()).unwrap();
    assert!(csv.starts_with("t,overhead_total,p_lb_due"));
    assert_eq!(csv.lines().count(), 32);

    let meta: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("plots").join("fig_pb3.meta.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(meta["command"], "sweep");
    assert_eq!(meta["tag"], "pb3");
    assert_eq!(meta["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for json in [
        r#"{"memory": {"rber": 2.0}}"#,
        r#"{"memroy": {}}"#,
        r#"{"schemes": [{"kind": "erasure_code", "n": 2, "k": 3}]}"#,
        r#"{"sweep": {"axis": "t", "range": {"start": 9, "end": 3}}}"#,
        "not json",
    ] {
        let cfg = write_config(dir.path(), json);
        let cmd = if json.contains("sweep") {
            "sweep"
        } else {
            "analyze"
        };
        let out = run(&[cmd], &cfg);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{json}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(!out.stderr.is_empty());
    }
    let out = run(&["analyze"], Path::new("/nonexistent/run.json"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_optimization_exits_3_and_names_the_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"schemes": [{"kind": "primary_backup", "n": 2}], "code": {"t_max": 3}, "targets": {"due": 1e-40}}"#,
    );
    let out = run(&["optimize"], &cfg);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("DUE"));
}

#[test]
fn too_few_trials_exits_4() {
    let out = bin()
        .args(["validate", "--trials", "100"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn validate_json_reports_every_check() {
    let out = bin()
        .args(["validate", "--trials", "20000", "--seed", "5"])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["seed"], 5);
    assert_eq!(v["logical_due"].as_array().unwrap().len(), 32);
    assert_eq!(v["pass"], true);
}

#[test]
fn optimize_csv_lists_each_scheme() {
    let out = bin()
        .args(["optimize", "--format", "csv", "--config"])
        .arg(config("optimize.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().count(), 3, "{csv}");
    assert!(csv.lines().next().unwrap().ends_with("savings_points"));
}
