//! Monte Carlo realizations of the log-determinant and counting fields:
//! pairings with test functions, centering, covariances against theory,
//! truncated negative Sobolev norms and per-mode variance scans.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::EnsembleSpec;
use crate::fmt_f64;
use crate::quadrature::QuadratureRule;
use crate::spectra::{replica_spectrum, BatchError, Spectrum};
use crate::stats::{mean, powerlaw_fit, unbiased_cov, PowerLawFit, StatsError};
use crate::sum::sum_compensated;
use crate::testfn::{FunctionSpec, Interval, TestFnError, TestFunction};
use crate::theory::{c_cnt_tests, v_coeffs, v_log_series_from_d, ChebCoeffs, DEFAULT_N_MAX};

#[derive(Debug, Error)]
pub enum FieldsError {
    #[error("need at least {min} replicas, got {got}")]
    TooFewReplicas { got: usize, min: usize },
    #[error("table has no {0} field")]
    MissingField(Field),
    #[error("table lacks Dirichlet mode e_{0}")]
    MissingMode(usize),
    #[error("no test functions")]
    NoFunctions,
    #[error(transparent)]
    Batch(#[from] BatchError),
    #[error(transparent)]
    TestFn(#[from] TestFnError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Log,
    Cnt,
}

impl std::fmt::Display for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Field::Log => "log",
            Field::Cnt => "cnt",
        })
    }
}

/// `Σ_i F_φ(λ_i)`.
pub fn pair_log_raw(spectrum: &Spectrum<f64>, phi: &TestFunction<f64>) -> f64 {
    sum_compensated(spectrum.values().iter().map(|&l| phi.f_transform(l)))
}

/// `Σ_i G_φ(λ_i)`.
pub fn pair_cnt_raw(spectrum: &Spectrum<f64>, phi: &TestFunction<f64>) -> f64 {
    sum_compensated(spectrum.values().iter().map(|&l| phi.g_transform(l)))
}

pub fn pair_raw(field: Field, spectrum: &Spectrum<f64>, phi: &TestFunction<f64>) -> f64 {
    match field {
        Field::Log => pair_log_raw(spectrum, phi),
        Field::Cnt => pair_cnt_raw(spectrum, phi),
    }
}

/// Uncentered pairings, one row per replica, plus the diagnostic
/// statistics `Tr H` and `Tr H²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingTable {
    pub spec: EnsembleSpec,
    pub master_seed: u64,
    pub replicas: usize,
    pub interval: (f64, f64),
    pub functions: Vec<FunctionSpec>,
    pub fields: Vec<Field>,
    /// `values[f][i][j]`: field `fields[f]`, replica `i`, function `j`.
    pub values: Vec<Vec<Vec<f64>>>,
    pub trace: Vec<f64>,
    pub trace_sq: Vec<f64>,
}

impl PairingTable {
    pub fn labels(&self) -> Vec<String> {
        self.functions.iter().map(FunctionSpec::label).collect()
    }

    fn field_index(&self, field: Field) -> Result<usize, FieldsError> {
        self.fields.iter().position(|&f| f == field).ok_or(FieldsError::MissingField(field))
    }

    /// Values of function `j` across replicas.
    pub fn column(&self, field: Field, j: usize) -> Result<Vec<f64>, FieldsError> {
        let f = self.field_index(field)?;
        Ok(self.values[f].iter().map(|row| row[j]).collect())
    }

    /// Rebuilds the test functions from their specs.
    pub fn test_functions(&self) -> Result<Vec<TestFunction<f64>>, FieldsError> {
        let interval = Interval::new(self.interval.0, self.interval.1)?;
        let rule = Arc::new(QuadratureRule::standard());
        Ok(self
            .functions
            .iter()
            .map(|s| TestFunction::from_spec(s, interval, rule.clone()))
            .collect::<Result<_, _>>()?)
    }

    /// The first `m` replicas.
    pub fn prefix(&self, m: usize) -> Self {
        let m = m.min(self.replicas);
        Self {
            replicas: m,
            values: self.values.iter().map(|v| v[..m].to_vec()).collect(),
            trace: self.trace[..m].to_vec(),
            trace_sq: self.trace_sq[..m].to_vec(),
            ..self.clone()
        }
    }

    /// Columns listed in `keep`, in that order.
    pub fn select(&self, keep: &[usize]) -> Self {
        Self {
            functions: keep.iter().map(|&j| self.functions[j].clone()).collect(),
            values: self
                .values
                .iter()
                .map(|v| v.iter().map(|row| keep.iter().map(|&j| row[j]).collect()).collect())
                .collect(),
            ..self.clone()
        }
    }

    /// Every column (diagnostics included) minus its sample mean.
    pub fn centered(&self) -> Self {
        let center = |xs: &[f64]| {
            let m = mean(xs);
            xs.iter().map(|x| x - m).collect::<Vec<_>>()
        };
        let values = self
            .values
            .iter()
            .map(|rows| {
                let cols: Vec<Vec<f64>> =
                    (0..self.functions.len()).map(|j| center(&rows.iter().map(|r| r[j]).collect::<Vec<_>>())).collect();
                (0..rows.len()).map(|i| cols.iter().map(|c| c[i]).collect()).collect()
            })
            .collect();
        Self { values, trace: center(&self.trace), trace_sq: center(&self.trace_sq), ..self.clone() }
    }

    /// CSV with columns `replica,function_id,field,value`; the diagnostic
    /// statistics appear as functions `tr_h` and `tr_h2` of field `diag`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "replica,function_id,field,value")?;
        let labels = self.labels();
        for i in 0..self.replicas {
            for (f, field) in self.fields.iter().enumerate() {
                for (j, label) in labels.iter().enumerate() {
                    writeln!(out, "{i},{label},{field},{}", fmt_f64(self.values[f][i][j]))?;
                }
            }
            writeln!(out, "{i},tr_h,diag,{}", fmt_f64(self.trace[i]))?;
            writeln!(out, "{i},tr_h2,diag,{}", fmt_f64(self.trace_sq[i]))?;
        }
        Ok(())
    }
}

/// Samples `replicas` matrices, pairs each spectrum with every function
/// and discards it. Replica `i` depends only on `(spec, master_seed, i)`.
pub fn run_experiment(
    spec: &EnsembleSpec,
    interval: Interval<f64>,
    functions: &[TestFunction<f64>],
    fields: &[Field],
    replicas: usize,
    master_seed: u64,
) -> Result<PairingTable, FieldsError> {
    if replicas < 2 {
        return Err(FieldsError::TooFewReplicas { got: replicas, min: 2 });
    }
    if functions.is_empty() {
        return Err(FieldsError::NoFunctions);
    }
    let rows = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let s = replica_spectrum(spec, master_seed, r)?;
            let pairings: Vec<Vec<f64>> =
                fields.iter().map(|&f| functions.iter().map(|phi| pair_raw(f, &s, phi)).collect()).collect();
            let tr = sum_compensated(s.values().iter().copied());
            let tr2 = sum_compensated(s.values().iter().map(|l| l * l));
            Ok((pairings, tr, tr2))
        })
        .collect::<Result<Vec<_>, BatchError>>()?;
    let mut values = vec![Vec::with_capacity(replicas); fields.len()];
    let mut trace = Vec::with_capacity(replicas);
    let mut trace_sq = Vec::with_capacity(replicas);
    for (pairings, tr, tr2) in rows {
        for (slot, row) in values.iter_mut().zip(pairings) {
            slot.push(row);
        }
        trace.push(tr);
        trace_sq.push(tr2);
    }
    Ok(PairingTable {
        spec: *spec,
        master_seed,
        replicas,
        interval: (interval.a(), interval.b()),
        functions: functions.iter().map(TestFunction::spec).collect(),
        fields: fields.to_vec(),
        values,
        trace,
        trace_sq,
    })
}

/// Limiting covariance matrix `V(φ_i, φ_j)` by the series route.
pub fn theory_matrix(field: Field, functions: &[TestFunction<f64>], s4: f64, n_max: usize) -> Vec<Vec<f64>> {
    let n = functions.len();
    let mut out = vec![vec![0.0; n]; n];
    match field {
        Field::Log => {
            let d: Vec<Vec<f64>> = functions.iter().map(|f| f.d_coeffs(n_max)).collect();
            for i in 0..n {
                for j in i..n {
                    let v = v_log_series_from_d(&d[i], &d[j], s4).value;
                    out[i][j] = v;
                    out[j][i] = v;
                }
            }
        }
        Field::Cnt => {
            let c: Vec<ChebCoeffs<f64>> = functions.iter().map(|f| c_cnt_tests(f, n_max)).collect();
            for i in 0..n {
                for j in i..n {
                    let v = v_coeffs(&c[i], &c[j], s4).value;
                    out[i][j] = v;
                    out[j][i] = v;
                }
            }
        }
    }
    out
}

/// Empirical covariance of centered pairings next to the theory values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceReport {
    pub field: Field,
    pub replicas: usize,
    pub s4: f64,
    pub labels: Vec<String>,
    pub empirical: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    pub theory: Vec<Vec<f64>>,
    /// `(empirical - theory) / se`.
    pub z: Vec<Vec<f64>>,
}

impl CovarianceReport {
    pub fn max_abs_z(&self) -> f64 {
        self.z.iter().flatten().fold(0.0, |m, z| if z.is_nan() { m } else { m.max(z.abs()) })
    }
}

pub fn center_and_covary(table: &PairingTable, field: Field) -> Result<CovarianceReport, FieldsError> {
    center_and_covary_with(table, field, DEFAULT_N_MAX)
}

pub fn center_and_covary_with(
    table: &PairingTable,
    field: Field,
    n_max: usize,
) -> Result<CovarianceReport, FieldsError> {
    if table.replicas < 2 {
        return Err(FieldsError::TooFewReplicas { got: table.replicas, min: 2 });
    }
    let n = table.functions.len();
    let cols: Vec<Vec<f64>> = (0..n).map(|j| table.column(field, j)).collect::<Result<_, _>>()?;
    let s4 = table.spec.s4();
    let theory = theory_matrix(field, &table.test_functions()?, s4, n_max);
    let mut empirical = vec![vec![0.0; n]; n];
    let mut se = vec![vec![0.0; n]; n];
    let mut z = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let c = unbiased_cov(&cols[i], &cols[j])?;
            let zz = (c.cov - theory[i][j]) / c.se;
            for (a, b) in [(i, j), (j, i)] {
                empirical[a][b] = c.cov;
                se[a][b] = c.se;
                z[a][b] = zz;
            }
        }
    }
    Ok(CovarianceReport { field, replicas: table.replicas, s4, labels: table.labels(), empirical, se, theory, z })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SobolevEstimate {
    pub field: Field,
    pub r: f64,
    pub k_max: usize,
    pub per_replica: Vec<f64>,
    pub mean: f64,
    pub se: f64,
    /// `(1 + μ_K)^{-r} Var⟨X, e_K⟩ K`.
    pub tail_proxy: f64,
}

fn mode_columns(table: &PairingTable, k_max: usize) -> Result<Vec<usize>, FieldsError> {
    (1..=k_max)
        .map(|k| table.functions.iter().position(|f| f.dirichlet_index() == Some(k)).ok_or(FieldsError::MissingMode(k)))
        .collect()
}

/// `Σ_{k ≤ K} (1 + μ_k)^{-r} ⟨X, e_k⟩²` per replica for the centered field.
/// Squares are scaled by `M/(M-1)` so the mean is the sum of unbiased
/// per-mode variances.
pub fn sobolev_norm_sq(
    table: &PairingTable,
    field: Field,
    r: f64,
    k_max: usize,
) -> Result<SobolevEstimate, FieldsError> {
    let m = table.replicas;
    if m < 2 {
        return Err(FieldsError::TooFewReplicas { got: m, min: 2 });
    }
    let cols = mode_columns(table, k_max)?;
    let interval = Interval::new(table.interval.0, table.interval.1)?;
    let scale = m as f64 / (m - 1) as f64;
    let weights: Vec<f64> = (1..=k_max).map(|k| (1.0 + interval.dirichlet_eigenvalue(k)).powf(-r)).collect();
    let centered: Vec<Vec<f64>> = cols
        .iter()
        .map(|&j| {
            let c = table.column(field, j)?;
            let mu = mean(&c);
            Ok(c.into_iter().map(|x| x - mu).collect())
        })
        .collect::<Result<_, FieldsError>>()?;
    let per_replica: Vec<f64> =
        (0..m).map(|i| scale * sum_compensated(centered.iter().zip(&weights).map(|(c, w)| w * c[i] * c[i]))).collect();
    let mu = mean(&per_replica);
    let se = unbiased_cov(&per_replica, &per_replica)?.cov.sqrt() / (m as f64).sqrt();
    let last = &centered[k_max - 1];
    let var_last = scale * sum_compensated(last.iter().map(|x| x * x)) / m as f64;
    let tail_proxy = weights[k_max - 1] * var_last * k_max as f64;
    Ok(SobolevEstimate { field, r, k_max, per_replica, mean: mu, se, tail_proxy })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceRow {
    pub k: usize,
    pub variance: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceScan {
    pub field: Field,
    pub rows: Vec<VarianceRow>,
    pub k_range: (usize, usize),
    pub fit: PowerLawFit,
}

/// Per-mode variances of `⟨X, e_k⟩` and the log-log slope over `k_range`.
pub fn variance_scan(table: &PairingTable, field: Field, k_range: (usize, usize)) -> Result<VarianceScan, FieldsError> {
    let (lo, hi) = k_range;
    let cols = mode_columns(table, hi)?;
    let mut rows = Vec::new();
    for k in lo.max(1)..=hi {
        let c = table.column(field, cols[k - 1])?;
        let v = unbiased_cov(&c, &c)?;
        rows.push(VarianceRow { k, variance: v.cov, se: v.se });
    }
    let ks: Vec<f64> = rows.iter().map(|r| r.k as f64).collect();
    let vars: Vec<f64> = rows.iter().map(|r| r.variance).collect();
    let fit = powerlaw_fit(&ks, &vars)?;
    Ok(VarianceScan { field, rows, k_range, fit })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Interval<f64> {
        Interval::new(-1.0, 1.0).unwrap()
    }

    #[test]
    fn trivial_pairings() {
        let b = TestFunction::bump_std(unit(), 0.0, 0.5).unwrap();
        let one = Spectrum::from_values(vec![0.3]).unwrap();
        assert_eq!(pair_log_raw(&one, &b), b.f_transform(0.3));
        let pm = Spectrum::from_values(vec![-1.0, 1.0]).unwrap();
        assert!((pair_log_raw(&pm, &b) - 2.0 * b.f_transform(1.0)).abs() < 1e-14);
        let left = Spectrum::from_values(vec![-1.9, -1.5, -0.6]).unwrap();
        assert!((pair_cnt_raw(&left, &b) - 3.0 * b.integral()).abs() < 1e-14);
        let right = Spectrum::from_values(vec![0.6, 1.5]).unwrap();
        assert_eq!(pair_cnt_raw(&right, &b), 0.0);
        let mid = Spectrum::from_values(vec![0.0]).unwrap();
        assert!((pair_cnt_raw(&mid, &b) - 0.5 * b.integral()).abs() < 1e-14);
    }
}
