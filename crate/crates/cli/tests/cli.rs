use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"{
    "grid": {"extent": 4, "points": 32},
    "family": {"seeds": 3},
    "suites": ["T1.2"],
    "sweep": {"alpha": [1.0], "p": [2], "refine": false}
}"#;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("config.json");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_aniso-lp"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .arg("--output")
        .arg(dir.join("out"))
        .env_remove("ANISO_LP_THREADS")
        .output()
        .unwrap()
}

fn summary(dir: &Path, command: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out").join(format!("{command}_summary.json"))).unwrap()).unwrap()
}

#[test]
fn verify_with_empty_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "{}", &["verify"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path(), "verify");
    assert_eq!(s["schema_version"], 1);
    assert_eq!(s["passed"], true);
    assert!(s["checks"].as_array().unwrap().len() >= 10);
    let table = fs::read_to_string(dir.path().join("out/verify.csv")).unwrap();
    assert!(table.starts_with("check,value,tolerance,pass\n"));
}

#[test]
fn sweep_output_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = run(dir.path(), SMALL, &["sweep"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("out/sweep.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    let table = String::from_utf8(read(&a)).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("tag,alpha,p,beta,k,seed,lhs,rhs,ratio"));
    // Three seeds at β = 0 and at the default weight.
    assert_eq!(lines.count(), 6);
    let s = summary(a.path(), "sweep");
    assert_eq!(s["cells"].as_array().unwrap().len(), 2);
    assert!(s["cells"][0]["refinement_drift"].is_null());
}

#[test]
fn master_seed_changes_the_family() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(a.path(), SMALL, &["sweep"]);
    run(b.path(), &SMALL.replacen('{', r#"{"master_seed": 7,"#, 1), &["sweep"]);
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("out/sweep.csv")).unwrap();
    assert_ne!(read(&a), read(&b));
}

#[test]
fn out_of_range_alpha_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), r#"{"suites": ["T1.2"], "sweep": {"alpha": [5.0]}}"#, &["sweep"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), r#"{"grid": {"extent": 8, "points": 64}, "seed": 3}"#, &["verify"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn demo_writes_its_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), r#"{"family": {"seeds": 4}, "sweep": {"p": [2]}}"#, &["demo"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["demo_diag12.csv", "demo_poisson_profile.csv", "demo_marcinkiewicz.csv", "demo_summary.json"] {
        assert!(dir.path().join("out").join(name).exists(), "{name}");
    }
    assert_eq!(summary(dir.path(), "demo")["passed"], true);
}

#[test]
fn thread_count_from_flag_or_environment() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(dir.path(), SMALL, &["verify", "--threads", "2"]).status.success());
    assert_eq!(run(dir.path(), SMALL, &["verify", "--threads", "0"]).status.code(), Some(2));
    let path = dir.path().join("config.json");
    let out = Command::new(env!("CARGO_BIN_EXE_aniso-lp"))
        .args(["verify", "--config"])
        .arg(&path)
        .arg("--output")
        .arg(dir.path().join("env"))
        .env("ANISO_LP_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
