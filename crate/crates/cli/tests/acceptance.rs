//! End-to-end acceptance runs at desk scale. Prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use logdet_lab::fields::{center_and_covary_with, Field, PairingTable};
use logdet_lab::stats::normality_test;
use logdet_lab_cli::commands::{analyze_scan, cmd_identities, diagnostics, run_table, sobolev_study, synth_report};
use logdet_lab_cli::ExperimentConfig;
use tempfile::TempDir;

const N: usize = 512;
const M: usize = 4000;
const SEED: u64 = 20240917;
const RG_S4: f64 = -0.8192;

const BUMPS: &str = r#"[{"type": "bump", "center": 0.0, "halfwidth": 0.3},
                        {"type": "bump", "center": 0.4, "halfwidth": 0.3}]"#;

fn config(ensemble: &str, n: usize, functions: &str, modes: usize, fields: &str, replicas: usize) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{"ensemble": {ensemble}, "n": {n}, "functions": {functions}, "modes": {modes},
            "fields": {fields}, "replicas": {replicas}, "seed": {SEED}}}"#
    ))
    .unwrap()
}

fn gaussian_config() -> ExperimentConfig {
    config(r#"{"family": "gaussian"}"#, N, BUMPS, 64, r#"["log", "cnt"]"#, M)
}

/// Bumps in columns 0 and 1, then `e_1 … e_64`.
fn gaussian_run() -> &'static PairingTable {
    static TABLE: OnceLock<PairingTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let c = gaussian_config();
        let t0 = Instant::now();
        let table = run_table(&c, N, &c.test_functions().unwrap()).unwrap();
        println!("     (Gaussian N={N}, M={M} run: {:.0} s)", t0.elapsed().as_secs_f64());
        table
    })
}

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict { passed, detail: detail.into() }
}

fn identities() -> Verdict {
    let tmp = TempDir::new().unwrap();
    let t0 = Instant::now();
    let outcome = cmd_identities(None, tmp.path()).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("identities.json")).unwrap()).unwrap();
    let mut detail = format!("{} in {secs:.1} s", outcome.message);
    for r in report["results"].as_array().unwrap() {
        detail.push_str(&format!(
            "\n       {:<18} residual {:.2e} (tol {:.0e})",
            r["name"].as_str().unwrap(),
            r["residual"].as_f64().unwrap_or(f64::INFINITY),
            r["tolerance"].as_f64().unwrap()
        ));
    }
    verdict(outcome.code == 0 && secs < 60.0, detail)
}

fn moment_anchors() -> Verdict {
    let rg = config(
        r#"{"family": "rademacher_gauss", "a": 0.8, "sigma": 0.6}"#,
        N,
        r#"[{"type": "bump", "center": 0.0, "halfwidth": 0.3}]"#,
        0,
        r#"["cnt"]"#,
        M,
    );
    let rg_table = run_table(&rg, N, &rg.test_functions().unwrap()).unwrap();
    let mut ok = true;
    let mut detail = String::new();
    for (name, table, s4) in [("gaussian", gaussian_run(), 0.0), ("rademacher_gauss", &rg_table, RG_S4)] {
        let d = diagnostics(table).unwrap();
        assert!((d.s4 - s4).abs() < 1e-12, "{name}: s4 = {}", d.s4);
        let z1 = (d.var_trace.cov - 2.0) / d.var_trace.se;
        let target = 4.0 + 2.0 * s4;
        let z2 = (d.var_trace_sq.cov - target) / d.var_trace_sq.se;
        ok &= z1.abs() <= 3.0 && z2.abs() <= 3.0;
        detail.push_str(&format!(
            "\n       {name}: Var Tr H = {:.4} (z {z1:+.2}), Var Tr H² = {:.4} vs {target:.4} (z {z2:+.2})",
            d.var_trace.cov, d.var_trace_sq.cov
        ));
    }
    verdict(ok, detail)
}

fn field_covariance() -> Verdict {
    let bumps = gaussian_run().select(&[0, 1]);
    let mut ok = true;
    let mut detail = String::new();
    for field in [Field::Log, Field::Cnt] {
        let r = center_and_covary_with(&bumps, field, 512).unwrap();
        for (i, j) in [(0, 0), (1, 1), (0, 1)] {
            ok &= r.z[i][j].abs() <= 3.0;
            detail.push_str(&format!(
                "\n       {field} ({i},{j}): {:.5} ± {:.5} vs {:.5} (z {:+.2})",
                r.empirical[i][j], r.se[i][j], r.theory[i][j], r.z[i][j]
            ));
        }
    }
    verdict(ok, detail)
}

fn gaussianity() -> Verdict {
    let bumps = gaussian_run().select(&[0, 1]);
    let mut ok = true;
    let mut detail = String::new();
    for field in [Field::Log, Field::Cnt] {
        let r = center_and_covary_with(&bumps, field, 512).unwrap();
        for j in 0..2 {
            let col = bumps.column(field, j).unwrap();
            let mu = col.iter().sum::<f64>() / col.len() as f64;
            let centered: Vec<f64> = col.iter().map(|x| x - mu).collect();
            let n = normality_test(&centered, r.theory[j][j]).unwrap();
            ok &= n.passed;
            detail.push_str(&format!(
                "\n       {field} {}: kurtosis {:+.3} (≤ {:.3}), KS {:.4} (≤ {:.4})",
                r.labels[j], n.excess_kurtosis, n.kurtosis_threshold, n.ks_distance, n.ks_threshold
            ));
        }
    }
    verdict(ok, detail)
}

fn variance_decay() -> Verdict {
    let scans = analyze_scan(gaussian_run(), (2, 32)).unwrap();
    let ok = scans.len() == 2 && scans.iter().all(|s| s.fit.slope <= -0.7);
    let detail: Vec<String> = scans.iter().map(|s| format!("{} slope {:.3}", s.field, s.fit.slope)).collect();
    verdict(ok, detail.join(", "))
}

fn sobolev_bound() -> Verdict {
    let fields = [Field::Log, Field::Cnt];
    let mut tables = Vec::new();
    for n in [128, 256] {
        let c = config(r#"{"family": "gaussian"}"#, n, "[]", 64, r#"["log", "cnt"]"#, 2000);
        tables.push((n, run_table(&c, n, &c.test_functions().unwrap()).unwrap()));
    }
    tables.push((N, gaussian_run().prefix(2000)));
    let study = sobolev_study(&tables, &fields, 0.5, 64).unwrap();
    let ok = study.spread.iter().all(|(_, s)| *s <= 0.25);
    let mut detail: Vec<String> = study.spread.iter().map(|(f, s)| format!("{f} spread {:.1}%", 100.0 * s)).collect();
    for (i, e) in study.estimates.iter().enumerate() {
        detail.push(format!("\n       N={} {}: {:.4} ± {:.4}", study.sizes[i / 2], e.field, e.mean, e.se));
    }
    verdict(ok, detail.join(", "))
}

fn synthesizer() -> Verdict {
    let functions = config(r#"{"family": "gaussian"}"#, N, BUMPS, 0, r#"["log"]"#, 2).test_functions().unwrap();
    let mut ok = true;
    let mut detail = String::new();
    for s4 in [0.0, RG_S4, 0.75] {
        let r = synth_report(&functions, s4, 512, 100_000, SEED).unwrap();
        let exact = r.mode2_weight == (1.0 + s4 / 2.0).sqrt();
        let worst = r.z.iter().flatten().fold(0.0f64, |a, z| a.max(z.abs()));
        ok &= r.passed && exact;
        detail.push_str(&format!(
            "\n       s4 {s4:+.4}: max |z| {worst:.2}, mode-2 weight {:.6} exact {exact}",
            r.mode2_weight
        ));
    }
    verdict(ok, detail)
}

fn artifact_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism() -> Verdict {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("config.json");
    std::fs::write(
        &cfg,
        r#"{"ensemble": {"family": "rademacher_gauss", "a": 0.8, "sigma": 0.6}, "n": 24,
            "functions": [{"type": "bump", "center": 0.0, "halfwidth": 0.3}], "modes": 8,
            "replicas": 60, "seed": 11,
            "options": {"k_max": 8, "k_range": [2, 8], "sizes": [16, 24], "synth_replicas": 500,
                        "n_max": 64, "grid_points": 9}}"#,
    )
    .unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for sub in ["identities", "mc", "scan", "sobolev", "synth", "kernels"] {
        let outputs: Vec<Vec<(String, Vec<u8>)>> = ["1", "4", "1"]
            .iter()
            .enumerate()
            .map(|(i, threads)| {
                let out = tmp.path().join(format!("{sub}-{i}"));
                let status = Command::new(env!("CARGO_BIN_EXE_logdet-lab"))
                    .args([
                        sub,
                        "--config",
                        cfg.to_str().unwrap(),
                        "--out",
                        out.to_str().unwrap(),
                        "--threads",
                        threads,
                    ])
                    .output()
                    .unwrap()
                    .status;
                assert!(status.code().is_some_and(|c| c <= 1), "{sub} exited with {status}");
                artifact_bytes(&out)
            })
            .collect();
        let same = outputs.windows(2).all(|w| w[0] == w[1]);
        ok &= same;
        let n = outputs[0].len();
        detail.push(format!("{sub} ({n} files) {}", if same { "identical" } else { "DIFFERS" }));
    }
    verdict(ok, detail.join(", "))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("1 identity suite", identities),
        ("2 exact-moment anchors", moment_anchors),
        ("3 field covariance", field_covariance),
        ("4 gaussianity", gaussianity),
        ("5 variance decay", variance_decay),
        ("6 uniform Sobolev bound", sobolev_bound),
        ("7 limit-field synthesizer", synthesizer),
        ("8 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let v = check();
        println!("{} {name}: {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.passed);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
