use serde_json::Value;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn shipped() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/cnot_paper.cfg")
}

fn clockrobust(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clockrobust")).args(args).env("CLOCKROBUST_THREADS", "2").output().unwrap()
}

fn write_config(dir: &Path, name: &str, edit: impl Fn(String) -> String) -> String {
    let path = dir.join(name);
    fs::write(&path, edit(fs::read_to_string(shipped()).unwrap())).unwrap();
    path.to_str().unwrap().to_string()
}

fn failure(out: &Output) -> Value {
    serde_json::from_str(String::from_utf8_lossy(&out.stderr).lines().last().unwrap()).unwrap()
}

#[test]
fn estimate_succeeds_and_prints_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("est");
    let out = clockrobust(&[
        "estimate",
        "--config",
        shipped().to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["algorithm"], "estimate");
    assert!(summary["jn"].as_f64().unwrap() > 0.0);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"]["initial"], 3);
    assert_eq!(manifest["seeds"]["test"], 2024);
}

#[test]
fn guard_violation_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "wide.cfg", |t| t.replacen("max = 0.4", "max = 0.99", 1));
    let out = clockrobust(&["grape", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(failure(&out)["status"], "config");
}

#[test]
fn missing_config_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = clockrobust(&["test", "--config", "/nonexistent.cfg", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(failure(&out)["exit_code"], 4);
}

#[test]
fn unwritable_output_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = clockrobust(&["estimate", "--config", shipped().to_str().unwrap(), "--out", blocker.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn exhausted_iterations_exit_with_non_convergence_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "short.cfg", |t| {
        t.replace("test_samples = 10000", "test_samples = 200") + "\n[run.grape]\nmax_iters = 2\n"
    });
    let out_dir = dir.path().join("o");
    let out = clockrobust(&["grape", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(failure(&out)["status"], "not_converged");
    assert!(out_dir.join("schedule.csv").exists());
}
