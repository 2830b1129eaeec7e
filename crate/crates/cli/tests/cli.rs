//! Drives the `emachine` binary end to end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_emachine"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn emachine(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out-dir").arg(out).output().expect("spawn emachine")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&o.stdout)))
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> =
        fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    names
}

#[test]
fn same_seed_same_bytes() {
    let cfg = configs().join("af_and.json");
    let cfg = cfg.to_str().unwrap();
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for d in [&a, &b] {
        let o = emachine(&["run", "af", "--config", cfg, "--seed", "7"], d.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let names = listing(a.path());
    assert_eq!(names, listing(b.path()));
    assert!(!names.is_empty());
    for n in &names {
        assert_eq!(fs::read(a.path().join(n)).unwrap(), fs::read(b.path().join(n)).unwrap(), "{n} differs");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let cfg = configs().join("pmm_path.json");
    let cfg = cfg.to_str().unwrap();
    let d = TempDir::new().unwrap();
    let o = emachine(&["pmm", "path", "--config", cfg, "--seed", "99"], d.path());
    assert!(o.status.success());
    assert_eq!(stdout_json(&o)["seed"], 99);
}

#[test]
fn malformed_config_is_rejected_before_any_output() {
    let d = TempDir::new().unwrap();
    let out = d.path().join("out");
    fs::create_dir(&out).unwrap();
    let bad = d.path().join("bad.json");
    fs::write(&bad, r#"{"kind": "af", "seed": 1, "payload": {"config": {"mode": "af7"}}}"#).unwrap();
    let o = emachine(&["run", "--config", bad.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("payload.config"), "error lacks a path: {err}");
    assert!(listing(&out).is_empty());
}

#[test]
fn missing_seed_is_rejected() {
    let d = TempDir::new().unwrap();
    let out = d.path().join("out");
    fs::create_dir(&out).unwrap();
    let text = fs::read_to_string(configs().join("af_and.json")).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v.as_object_mut().unwrap().remove("seed");
    let cfg = d.path().join("noseed.json");
    fs::write(&cfg, v.to_string()).unwrap();
    let o = emachine(&["run", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
    assert!(listing(&out).is_empty());
}

#[test]
fn kind_mismatch_is_invalid() {
    let d = TempDir::new().unwrap();
    let cfg = configs().join("af_and.json");
    let o = emachine(&["fsm", "--config", cfg.to_str().unwrap()], d.path());
    assert_eq!(o.status.code(), Some(1));
    let o = emachine(&["pmm", "ghk", "--config", configs().join("pmm_path.json").to_str().unwrap()], d.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_suite_lists_the_known_ones() {
    let d = TempDir::new().unwrap();
    let o = emachine(&["verify", "nonsense"], d.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    for s in ["ghk", "wta", "spike", "all"] {
        assert!(err.contains(s), "{s} missing from: {err}");
    }
}

#[test]
fn verify_suite_reports_json() {
    let d = TempDir::new().unwrap();
    let o = emachine(&["verify", "ghk"], d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["passed"], true);
    assert_eq!(v["criteria"][0]["criterion"], 11);
    assert!(String::from_utf8_lossy(&o.stderr).contains("PASS"));
}

#[test]
fn robot_mental_matches_real() {
    let d = TempDir::new().unwrap();
    let tapes = configs().join("robot_tapes.json");
    let o = emachine(&["robot", "train", "--tapes", tapes.to_str().unwrap(), "--seed", "5"], d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let brain = d.path().join("brain.json");
    assert!(brain.exists());
    for (tape, verdict) in [("(()())", "yes"), ("(()", "no"), ("())(", "no")] {
        let o = emachine(&["robot", "exam", "--brain", brain.to_str().unwrap(), "--tape", tape, "--mental"], d.path());
        assert!(o.status.success(), "{tape}: {}", String::from_utf8_lossy(&o.stderr));
        let v = stdout_json(&o);
        assert_eq!(v["results"]["real_verdict"], verdict, "{tape}");
        assert_eq!(v["results"]["mental_verdict"], v["results"]["real_verdict"], "{tape}");
    }
}

#[test]
fn untrained_brain_is_a_runtime_failure() {
    let d = TempDir::new().unwrap();
    let tapes = d.path().join("tapes.json");
    fs::write(&tapes, r#"[")"]"#).unwrap();
    let o = emachine(&["robot", "train", "--tapes", tapes.to_str().unwrap()], d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let brain = d.path().join("brain.json");
    let o = emachine(&["robot", "exam", "--brain", brain.to_str().unwrap(), "--tape", "(())"], d.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn shipped_configs_run_and_pass() {
    let mut ran = 0;
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        if !v.is_object() {
            continue;
        }
        let d = TempDir::new().unwrap();
        let o = emachine(&["run", "--config", path.to_str().unwrap()], d.path());
        assert!(o.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&o.stderr));
        assert_eq!(stdout_json(&o)["passed"], true, "{}", path.display());
        assert!(!listing(d.path()).iter().any(|n| n.ends_with(".partial")));
        ran += 1;
    }
    assert!(ran >= 8);
}

#[test]
fn spike_defaults_without_config() {
    let d = TempDir::new().unwrap();
    let o = emachine(&["epmm", "spike"], d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["nonpaper"], true);
    assert_eq!(v["passed"], true);
}
