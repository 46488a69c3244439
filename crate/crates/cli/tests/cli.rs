use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn padmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_padmm")).args(args).output().unwrap()
}

fn small_config(dir: &Path) -> String {
    let cfg = r#"{
        "preset": "1q-x",
        "seeds": [3, 7],
        "workers": 2,
        "tasks": {"1q-x": {
            "grape": {"iterations": 10},
            "quasi_newton": {"max_iters": 8},
            "padmm": {"outer_steps": 10, "warm_start_steps": 4}
        }},
        "robustness": {"drift_shapes": 1}
    }"#;
    let path = dir.join("small.json");
    fs::write(&path, cfg).unwrap();
    path.display().to_string()
}

#[test]
fn run_writes_record_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = padmm(&[
        "run",
        "--preset",
        "1q-x",
        "--method",
        "grape",
        "--seeds",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["method"], "grape");
    assert!(out.join("run_1q-x_grape_7.json").exists());
    assert!(out.join("manifest.json").exists());
}

#[test]
fn missing_config_aborts_with_error_record() {
    let o = padmm(&["bench", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["status"], "aborted");
    assert_eq!(err["command"], "bench");
}

#[test]
fn unknown_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"tasks": {"1q-x": {"padmm": {"etaa": 0.1}}}}"#).unwrap();
    let o = padmm(&["run", "--preset", "1q-x", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["kind"], "config");
    assert!(err["message"].as_str().unwrap().contains("etaa"));
}

#[test]
fn unsupported_gradient_mode_is_rejected() {
    let o = padmm(&["run", "--grad-mode", "bogus"]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn bench_is_deterministic_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut hashes = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = padmm(&["bench", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        hashes.push(m["files"].clone());
    }
    assert_eq!(hashes[0], hashes[1]);
    assert!(hashes[0].get("benchmark.csv").is_some());
}
