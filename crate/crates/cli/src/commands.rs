//! The six subcommands. Each analysis step is a plain function so that the
//! acceptance tests exercise exactly what the commands persist.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use logdet_lab::ensemble::{EnsembleSpec, RngStream};
use logdet_lab::fields::{
    center_and_covary_with, run_experiment, sobolev_norm_sq, variance_scan, CovarianceReport, Field, FieldsError,
    PairingTable, SobolevEstimate, VarianceScan,
};
use logdet_lab::fmt_f64;
use logdet_lab::identities::{run_identities, IdentityConfig, IdentityReport};
use logdet_lab::stats::{normality_test, unbiased_cov, CovEstimate, NormalityReport};
use logdet_lab::testfn::{FunctionSpec, TestFunction};
use logdet_lab::theory::{
    kernel_eval, limit_field_weight, v_log_series_from_d, KernelKind, KernelSpec, LimitFieldSample,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, SyntheticScan};
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exit status and a one-line summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub message: String,
}

impl Outcome {
    fn ok(message: impl Into<String>) -> Self {
        Self { code: 0, message: message.into() }
    }
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn csv(
        &mut self,
        name: &str,
        write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let mut w = BufWriter::new(File::create(self.dir.join(name))?);
        write(&mut w)?;
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
        text.push('\n');
        std::fs::write(self.dir.join(name), text)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn manifest(mut self, command: &str, seed: u64, config: Option<&ExperimentConfig>) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            tool: &'a str,
            version: &'a str,
            command: &'a str,
            seed: u64,
            config: Option<&'a ExperimentConfig>,
            files: &'a [String],
        }
        let files = std::mem::take(&mut self.files);
        let m = Manifest { tool: "logdet-lab", version: VERSION, command, seed, config, files: &files };
        self.json("manifest.json", &m)
    }
}

fn fields_error(e: FieldsError) -> CliError {
    match e {
        FieldsError::Batch(b) => CliError::Numerical(b.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

pub fn identity_config(config: Option<&ExperimentConfig>) -> Result<IdentityConfig, CliError> {
    let mut ic = IdentityConfig::default();
    if let Some(c) = config {
        ic.tolerance = c.options.tolerance;
        ic.n_max = c.options.n_max;
        ic.series_terms = c.options.series_terms;
        ic.interval = c.interval;
        ic.s4 = c.ensemble_spec(c.n.max(2))?.s4();
    }
    Ok(ic)
}

pub fn cmd_identities(config: Option<&ExperimentConfig>, out: &Path) -> Result<Outcome, CliError> {
    let ic = identity_config(config)?;
    let report: IdentityReport = run_identities(&ic);
    let mut o = Output::new(out)?;
    o.json("identities.json", &report)?;
    o.manifest("identities", config.map_or(0, |c| c.seed), config)?;
    Ok(match &report.first_failure {
        None => Outcome::ok(format!("{} identities passed", report.results.len())),
        Some(name) => Outcome { code: 1, message: format!("identity failed: {name}") },
    })
}

/// `Tr H` and `Tr H²` variances next to their exact values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub n: usize,
    pub s4: f64,
    pub var_trace: CovEstimate,
    pub theory_trace: f64,
    pub var_trace_sq: CovEstimate,
    /// `4 + 2 s4`, the large-N limit.
    pub theory_trace_sq: f64,
    /// `4 + 2 s4 + (4 + 6 s4)/N`, exact at finite N.
    pub exact_trace_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalityEntry {
    pub field: Field,
    pub function: String,
    pub report: NormalityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub diagnostics: Diagnostics,
    pub covariance: Vec<CovarianceReport>,
    pub normality: Vec<NormalityEntry>,
}

pub fn diagnostics(table: &PairingTable) -> Result<Diagnostics, CliError> {
    let s4 = table.spec.s4();
    let n = table.spec.n as f64;
    let stat = |xs: &[f64]| unbiased_cov(xs, xs).map_err(|e| CliError::Numerical(e.to_string()));
    Ok(Diagnostics {
        n: table.spec.n,
        s4,
        var_trace: stat(&table.trace)?,
        theory_trace: 2.0,
        var_trace_sq: stat(&table.trace_sq)?,
        theory_trace_sq: 4.0 + 2.0 * s4,
        exact_trace_sq: 4.0 + 2.0 * s4 + (4.0 + 6.0 * s4) / n,
    })
}

/// Covariance against theory and per-pairing normality for every field.
pub fn analyze_mc(table: &PairingTable, n_max: usize) -> Result<McReport, CliError> {
    let mut covariance = Vec::new();
    let mut normality = Vec::new();
    let labels = table.labels();
    for &field in &table.fields {
        let cov = center_and_covary_with(table, field, n_max).map_err(fields_error)?;
        for (j, label) in labels.iter().enumerate() {
            let col = table.column(field, j).map_err(fields_error)?;
            let mu = col.iter().sum::<f64>() / col.len() as f64;
            let centered: Vec<f64> = col.iter().map(|x| x - mu).collect();
            let report = normality_test(&centered, cov.theory[j][j]).map_err(|e| CliError::Numerical(e.to_string()))?;
            normality.push(NormalityEntry { field, function: label.clone(), report });
        }
        covariance.push(cov);
    }
    Ok(McReport { diagnostics: diagnostics(table)?, covariance, normality })
}

pub fn run_table(
    config: &ExperimentConfig,
    n: usize,
    functions: &[TestFunction<f64>],
) -> Result<PairingTable, CliError> {
    let spec = config.ensemble_spec(n)?;
    run_experiment(&spec, config.interval()?, functions, &config.fields, config.replicas, config.seed)
        .map_err(fields_error)
}

fn write_covariance_csv(w: &mut impl Write, r: &CovarianceReport) -> std::io::Result<()> {
    writeln!(w, "i,j,function_i,function_j,empirical,se,theory,z")?;
    for i in 0..r.labels.len() {
        for j in i..r.labels.len() {
            writeln!(
                w,
                "{i},{j},{},{},{},{},{},{}",
                r.labels[i],
                r.labels[j],
                fmt_f64(r.empirical[i][j]),
                fmt_f64(r.se[i][j]),
                fmt_f64(r.theory[i][j]),
                fmt_f64(r.z[i][j])
            )?;
        }
    }
    Ok(())
}

pub fn cmd_mc(config: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    config.validate()?;
    let functions = config.test_functions()?;
    if functions.is_empty() {
        return Err(CliError::Config("mc needs at least one test function".into()));
    }
    let table = run_table(config, config.n, &functions)?;
    let report = analyze_mc(&table, config.options.n_max)?;
    let mut o = Output::new(out)?;
    o.csv("pairings.csv", |w| table.write_csv(w))?;
    for cov in &report.covariance {
        o.csv(&format!("covariance_{}.csv", cov.field), |w| write_covariance_csv(w, cov))?;
    }
    o.json("covariance.json", &report.covariance)?;
    o.json("normality.json", &report.normality)?;
    o.json("diagnostics.json", &report.diagnostics)?;
    o.manifest("mc", config.seed, Some(config))?;
    let worst = report.covariance.iter().map(CovarianceReport::max_abs_z).fold(0.0, f64::max);
    Ok(Outcome::ok(format!("{} replicas, max |z| = {worst:.2}", table.replicas)))
}

/// Table whose column for `e_k` is `k^{exponent/2} z` with `z` standardized,
/// so that the sample variances follow the power law exactly.
pub fn synthetic_scan_table(
    spec: EnsembleSpec,
    interval: (f64, f64),
    k_max: usize,
    s: SyntheticScan,
    seed: u64,
) -> PairingTable {
    use rand::Rng;
    let m = s.replicas.max(2);
    let mut rng = RngStream::new(seed, 0).rng();
    let mut z: Vec<f64> = (0..m).map(|_| rng.random::<f64>() - 0.5).collect();
    let mu = z.iter().sum::<f64>() / m as f64;
    let sd = (z.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt();
    z.iter_mut().for_each(|x| *x = (*x - mu) / sd);
    let rows: Vec<Vec<f64>> =
        (0..m).map(|i| (1..=k_max).map(|k| (k as f64).powf(s.exponent / 2.0) * z[i]).collect()).collect();
    PairingTable {
        spec,
        master_seed: seed,
        replicas: m,
        interval,
        functions: (1..=k_max).map(|k| FunctionSpec::Dirichlet { k }).collect(),
        fields: vec![Field::Log, Field::Cnt],
        values: vec![rows.clone(), rows],
        trace: vec![0.0; m],
        trace_sq: vec![0.0; m],
    }
}

pub fn analyze_scan(table: &PairingTable, k_range: (usize, usize)) -> Result<Vec<VarianceScan>, CliError> {
    table.fields.iter().map(|&f| variance_scan(table, f, k_range).map_err(fields_error)).collect()
}

fn mode_functions(config: &ExperimentConfig, k_max: usize) -> Result<Vec<TestFunction<f64>>, CliError> {
    let mut c = config.clone();
    c.functions.clear();
    c.modes = k_max;
    c.test_functions()
}

pub fn cmd_scan(config: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let (lo, hi) = config.options.k_range;
    if lo < 1 || hi <= lo {
        return Err(CliError::Config(format!("k_range [{lo}, {hi}] needs at least two modes for a slope")));
    }
    let table = match config.options.synthetic {
        Some(s) => {
            config.interval()?;
            synthetic_scan_table(config.ensemble_spec(config.n)?, config.interval, hi, s, config.seed)
        }
        None => {
            config.validate()?;
            run_table(config, config.n, &mode_functions(config, hi)?)?
        }
    };
    let scans = analyze_scan(&table, (lo, hi))?;
    let mut o = Output::new(out)?;
    for s in &scans {
        o.csv(&format!("variance_{}.csv", s.field), |w| {
            writeln!(w, "k,variance,se")?;
            for r in &s.rows {
                writeln!(w, "{},{},{}", r.k, fmt_f64(r.variance), fmt_f64(r.se))?;
            }
            Ok(())
        })?;
    }
    o.json("scan.json", &scans)?;
    o.manifest("scan", config.seed, Some(config))?;
    let slopes: Vec<String> = scans.iter().map(|s| format!("{} {:.3}", s.field, s.fit.slope)).collect();
    Ok(Outcome::ok(format!("slopes: {}", slopes.join(", "))))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SobolevStudy {
    pub sizes: Vec<usize>,
    pub estimates: Vec<SobolevEstimate>,
    /// `max/min - 1` of the means across sizes, per field.
    pub spread: Vec<(Field, f64)>,
}

pub fn sobolev_study(
    tables: &[(usize, PairingTable)],
    fields: &[Field],
    r: f64,
    k_max: usize,
) -> Result<SobolevStudy, CliError> {
    let mut estimates = Vec::new();
    for (_, t) in tables {
        for &f in fields {
            estimates.push(sobolev_norm_sq(t, f, r, k_max).map_err(fields_error)?);
        }
    }
    let spread = fields
        .iter()
        .map(|&f| {
            let means: Vec<f64> = estimates.iter().filter(|e| e.field == f).map(|e| e.mean).collect();
            let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (f, hi / lo - 1.0)
        })
        .collect();
    Ok(SobolevStudy { sizes: tables.iter().map(|(n, _)| *n).collect(), estimates, spread })
}

pub fn cmd_sobolev(config: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    config.validate()?;
    let k_max = config.options.k_max;
    if k_max == 0 {
        return Err(CliError::Config("k_max must be positive".into()));
    }
    let sizes = if config.options.sizes.is_empty() { vec![config.n] } else { config.options.sizes.clone() };
    let modes = mode_functions(config, k_max)?;
    let tables = sizes.iter().map(|&n| Ok((n, run_table(config, n, &modes)?))).collect::<Result<Vec<_>, CliError>>()?;
    let study = sobolev_study(&tables, &config.fields, config.options.r, k_max)?;
    let mut o = Output::new(out)?;
    o.csv("sobolev.csv", |w| {
        writeln!(w, "n,field,r,k_max,mean,se,tail_proxy")?;
        for (i, e) in study.estimates.iter().enumerate() {
            let n = study.sizes[i / config.fields.len()];
            writeln!(
                w,
                "{n},{},{},{},{},{},{}",
                e.field,
                fmt_f64(e.r),
                e.k_max,
                fmt_f64(e.mean),
                fmt_f64(e.se),
                fmt_f64(e.tail_proxy)
            )?;
        }
        Ok(())
    })?;
    #[derive(Serialize)]
    struct Summary<'a> {
        sizes: &'a [usize],
        spread: &'a [(Field, f64)],
        means: Vec<(usize, Field, f64, f64)>,
    }
    let means = study
        .estimates
        .iter()
        .enumerate()
        .map(|(i, e)| (study.sizes[i / config.fields.len()], e.field, e.mean, e.se))
        .collect();
    o.json("sobolev.json", &Summary { sizes: &study.sizes, spread: &study.spread, means })?;
    o.manifest("sobolev", config.seed, Some(config))?;
    let spread: Vec<String> = study.spread.iter().map(|(f, s)| format!("{f} {:.1}%", 100.0 * s)).collect();
    Ok(Outcome::ok(format!("spread across sizes: {}", spread.join(", "))))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthReport {
    pub s4: f64,
    pub samples: usize,
    pub mode2_weight: f64,
    pub labels: Vec<String>,
    pub empirical: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    pub theory: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub passed: bool,
}

/// Covariance of limit-field pairings over `samples` draws, against the series.
pub fn synth_report(
    functions: &[TestFunction<f64>],
    s4: f64,
    n_max: usize,
    samples: usize,
    seed: u64,
) -> Result<SynthReport, CliError> {
    let d: Vec<Vec<f64>> = functions.iter().map(|f| f.d_coeffs(n_max)).collect();
    let rows = (0..samples as u64)
        .into_par_iter()
        .map(|r| {
            let x = LimitFieldSample::synthesize(s4, n_max, RngStream::new(seed, r))?;
            Ok(d.iter().map(|dj| x.pair_coeffs(dj)).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>, logdet_lab::theory::TheoryError>>()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let n = functions.len();
    let cols: Vec<Vec<f64>> = (0..n).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let mut report = SynthReport {
        s4,
        samples,
        mode2_weight: limit_field_weight::<f64>(2, s4),
        labels: functions.iter().map(|f| f.spec().label()).collect(),
        empirical: vec![vec![0.0; n]; n],
        se: vec![vec![0.0; n]; n],
        theory: vec![vec![0.0; n]; n],
        z: vec![vec![0.0; n]; n],
        passed: true,
    };
    for i in 0..n {
        for j in i..n {
            let c = unbiased_cov(&cols[i], &cols[j]).map_err(|e| CliError::Numerical(e.to_string()))?;
            let v = v_log_series_from_d(&d[i], &d[j], s4).value;
            let z = (c.cov - v) / c.se;
            report.passed &= z.abs() <= 3.0;
            for (a, b) in [(i, j), (j, i)] {
                report.empirical[a][b] = c.cov;
                report.se[a][b] = c.se;
                report.theory[a][b] = v;
                report.z[a][b] = z;
            }
        }
    }
    Ok(report)
}

pub fn cmd_synth(config: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let functions = config.test_functions()?;
    if functions.is_empty() {
        return Err(CliError::Config("synth needs at least one test function".into()));
    }
    let s4s = if config.options.s4_values.is_empty() {
        vec![config.ensemble_spec(config.n.max(2))?.s4()]
    } else {
        config.options.s4_values.clone()
    };
    let samples = config.options.synth_replicas.unwrap_or(config.replicas);
    if samples < 2 {
        return Err(CliError::Config("synth needs at least 2 samples".into()));
    }
    let reports = s4s
        .iter()
        .map(|&s4| synth_report(&functions, s4, config.options.n_max, samples, config.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let mut o = Output::new(out)?;
    o.csv("synth.csv", |w| {
        writeln!(w, "s4,i,j,function_i,function_j,empirical,se,theory,z")?;
        for r in &reports {
            for i in 0..r.labels.len() {
                for j in i..r.labels.len() {
                    writeln!(
                        w,
                        "{},{i},{j},{},{},{},{},{},{}",
                        fmt_f64(r.s4),
                        r.labels[i],
                        r.labels[j],
                        fmt_f64(r.empirical[i][j]),
                        fmt_f64(r.se[i][j]),
                        fmt_f64(r.theory[i][j]),
                        fmt_f64(r.z[i][j])
                    )?;
                }
            }
        }
        Ok(())
    })?;
    o.json("synth.json", &reports)?;
    o.manifest("synth", config.seed, Some(config))?;
    match reports.iter().find(|r| !r.passed) {
        None => Ok(Outcome::ok(format!("{} s4 values within 3 SE", reports.len()))),
        Some(r) => {
            Ok(Outcome { code: 1, message: format!("synthesized covariance off by more than 3 SE at s4 = {}", r.s4) })
        }
    }
}

pub fn cmd_kernels(config: Option<&ExperimentConfig>, out: &Path) -> Result<Outcome, CliError> {
    let (s4, g) = match config {
        Some(c) => (c.ensemble_spec(c.n.max(2))?.s4(), c.options.grid_points),
        None => (0.0, crate::config::Options::default().grid_points),
    };
    if g < 2 {
        return Err(CliError::Config("grid_points must be at least 2".into()));
    }
    let log = KernelSpec::new(KernelKind::Log, s4).map_err(|e| CliError::Config(e.to_string()))?;
    let cnt = KernelSpec::new(KernelKind::Cnt, s4).map_err(|e| CliError::Config(e.to_string()))?;
    let grid: Vec<f64> = (1..=g).map(|i| -2.0 + 4.0 * i as f64 / (g + 1) as f64).collect();
    let mut o = Output::new(out)?;
    let mut failure = None;
    o.csv("kernels.csv", |w| {
        writeln!(w, "e,e_prime,k_log,k_cnt")?;
        for (i, &e) in grid.iter().enumerate() {
            for (j, &f) in grid.iter().enumerate() {
                if i == j {
                    continue;
                }
                match (kernel_eval(&log, e, f), kernel_eval(&cnt, e, f)) {
                    (Ok(kl), Ok(kc)) => writeln!(w, "{},{},{},{}", fmt_f64(e), fmt_f64(f), fmt_f64(kl), fmt_f64(kc))?,
                    (Err(err), _) | (_, Err(err)) => failure = Some(err.to_string()),
                }
            }
        }
        Ok(())
    })?;
    if let Some(err) = failure {
        return Err(CliError::Numerical(err));
    }
    o.manifest("kernels", config.map_or(0, |c| c.seed), config)?;
    Ok(Outcome::ok(format!("{} off-diagonal grid pairs", g * (g - 1))))
}
