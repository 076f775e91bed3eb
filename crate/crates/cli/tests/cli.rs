use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_logdet-lab"));
    c.env_remove("LOGDET_LAB_THREADS");
    c
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p
}

fn run(args: &[&str]) -> i32 {
    let out = bin().args(args).output().unwrap();
    out.status.code().unwrap()
}

fn read_json(p: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

const SMALL_MC: &str = r#"{
  "ensemble": {"family": "rademacher_gauss", "a": 0.8, "sigma": 0.6},
  "n": 32,
  "functions": [{"type": "bump", "center": 0.0, "halfwidth": 0.3}, {"type": "dirichlet", "k": 2}],
  "replicas": 40,
  "seed": 7
}"#;

#[test]
fn identities_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("id");
    assert_eq!(run(&["identities", "--out", out.to_str().unwrap()]), 0);
    let report = read_json(out.join("identities.json"));
    assert!(report["results"].as_array().unwrap().len() >= 8);
    assert!(out.join("manifest.json").exists());

    let strict = write_config(
        tmp.path(),
        "strict.json",
        r#"{"ensemble": {"family": "gaussian"}, "n": 1, "options": {"tolerance": 1e-15}}"#,
    );
    assert_eq!(run(&["identities", "--config", strict.to_str().unwrap(), "--out", out.to_str().unwrap()]), 1);
    let short = write_config(
        tmp.path(),
        "short.json",
        r#"{"ensemble": {"family": "gaussian"}, "n": 1, "options": {"n_max": 1}}"#,
    );
    assert_eq!(run(&["identities", "--config", short.to_str().unwrap(), "--out", out.to_str().unwrap()]), 1);
    let report = read_json(out.join("identities.json"));
    assert_eq!(report["passed"], Value::Bool(false));
}

#[test]
fn mc_artifacts_and_theory_plumbing() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "mc.json", SMALL_MC);
    let out = tmp.path().join("mc");
    assert_eq!(run(&["mc", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    for f in [
        "pairings.csv",
        "covariance_log.csv",
        "covariance_cnt.csv",
        "covariance.json",
        "normality.json",
        "diagnostics.json",
        "manifest.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let cov = read_json(out.join("covariance.json"));
    assert!((cov[0]["s4"].as_f64().unwrap() + 0.8192).abs() < 1e-12);
    assert!(cov[0]["theory"][0][0].as_f64().unwrap() > 0.0);
    let manifest = read_json(out.join("manifest.json"));
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config"]["replicas"], 40);
    let csv = std::fs::read_to_string(out.join("pairings.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 40 * (2 * 2 + 2));
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "mc.json", SMALL_MC);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(run(&["mc", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap(), "--threads", "1"]), 0);
    let status = bin()
        .args(["mc", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()])
        .env("LOGDET_LAB_THREADS", "3")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for f in ["pairings.csv", "covariance_log.csv", "covariance_cnt.csv", "manifest.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = tmp.path().join("c");
    assert_eq!(run(&["mc", "--config", cfg.to_str().unwrap(), "--out", c.to_str().unwrap(), "--seed", "8"]), 0);
    assert_ne!(std::fs::read(a.join("pairings.csv")).unwrap(), std::fs::read(c.join("pairings.csv")).unwrap());
}

#[test]
fn invalid_configs_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("x");
    let o = out.to_str().unwrap();
    assert_eq!(run(&["mc", "--out", o]), 2);
    let bad_json = write_config(tmp.path(), "bad.json", "{ not json");
    assert_eq!(run(&["mc", "--config", bad_json.to_str().unwrap(), "--out", o]), 2);
    let bad_diag = write_config(
        tmp.path(),
        "diag.json",
        r#"{"ensemble": {"family": "rademacher_gauss", "a": 0.8, "sigma": 0.6}, "diag": {"family": "gaussian"}, "n": 8, "functions": [{"type": "dirichlet", "k": 1}]}"#,
    );
    assert_eq!(run(&["mc", "--config", bad_diag.to_str().unwrap(), "--out", o]), 2);
    let bad_family = write_config(
        tmp.path(),
        "fam.json",
        r#"{"ensemble": {"family": "scale_mixture", "p": 1.5, "sigma1": 1.0, "sigma2": 1.0}, "n": 8, "functions": [{"type": "dirichlet", "k": 1}]}"#,
    );
    assert_eq!(run(&["mc", "--config", bad_family.to_str().unwrap(), "--out", o]), 2);
    let one = write_config(
        tmp.path(),
        "one.json",
        r#"{"ensemble": {"family": "gaussian"}, "n": 8, "replicas": 1, "functions": [{"type": "dirichlet", "k": 1}]}"#,
    );
    assert_eq!(run(&["mc", "--config", one.to_str().unwrap(), "--out", o]), 2);
}

#[test]
fn scan_tables_and_slopes() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "scan.json",
        r#"{"ensemble": {"family": "gaussian"}, "n": 24, "replicas": 30, "options": {"k_range": [2, 8]}}"#,
    );
    let out = tmp.path().join("scan");
    assert_eq!(run(&["scan", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    let log = std::fs::read_to_string(out.join("variance_log.csv")).unwrap();
    let cnt = std::fs::read_to_string(out.join("variance_cnt.csv")).unwrap();
    assert_eq!(log.lines().count(), 8);
    assert_eq!(cnt.lines().count(), 8);

    let single = write_config(
        tmp.path(),
        "single.json",
        r#"{"ensemble": {"family": "gaussian"}, "n": 24, "replicas": 30, "options": {"k_range": [4, 4]}}"#,
    );
    assert_eq!(run(&["scan", "--config", single.to_str().unwrap(), "--out", out.to_str().unwrap()]), 2);

    let synth = write_config(
        tmp.path(),
        "synthetic.json",
        r#"{"ensemble": {"family": "gaussian"}, "n": 24, "options": {"synthetic": {"exponent": -1.0, "replicas": 500}}}"#,
    );
    let out = tmp.path().join("synthetic");
    assert_eq!(run(&["scan", "--config", synth.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    let scans = read_json(out.join("scan.json"));
    for s in scans.as_array().unwrap() {
        assert!((s["fit"]["slope"].as_f64().unwrap() + 1.0).abs() < 1e-10);
    }
}

#[test]
fn sobolev_and_kernels_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "sob.json",
        r#"{"ensemble": {"family": "gaussian"}, "n": 16, "replicas": 20, "options": {"k_max": 6, "sizes": [16, 24]}}"#,
    );
    let a = tmp.path().join("sa");
    let b = tmp.path().join("sb");
    assert_eq!(run(&["sobolev", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]), 0);
    assert_eq!(run(&["sobolev", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--threads", "2"]), 0);
    let text = std::fs::read_to_string(a.join("sobolev.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2);
    assert_eq!(text, std::fs::read_to_string(b.join("sobolev.csv")).unwrap());

    let k = tmp.path().join("k");
    assert_eq!(run(&["kernels", "--out", k.to_str().unwrap()]), 0);
    let text = std::fs::read_to_string(k.join("kernels.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 33 * 32);
    assert!(rows.iter().all(|r| r[0] != r[1]));
}

#[test]
fn synth_passes_at_s4_zero() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "synth.json",
        r#"{"ensemble": {"family": "gaussian"}, "n": 1, "functions": [{"type": "bump", "center": 0.0, "halfwidth": 0.3}],
            "seed": 3, "options": {"synth_replicas": 100000}}"#,
    );
    let out = tmp.path().join("s");
    assert_eq!(run(&["synth", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    let r = read_json(out.join("synth.json"));
    assert_eq!(r[0]["mode2_weight"], 1.0);
}
