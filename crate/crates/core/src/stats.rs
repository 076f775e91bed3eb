//! Estimators and diagnostics for Monte Carlo samples.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::sum::sum_compensated;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { got: usize, min: usize },
    #[error("theoretical variance must be positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("power-law inputs must be strictly positive")]
    NonPositiveInput,
}

pub fn mean(xs: &[f64]) -> f64 {
    sum_compensated(xs.iter().copied()) / xs.len() as f64
}

/// Sample covariance with a delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovEstimate {
    pub cov: f64,
    pub se: f64,
}

/// `Σ (x - x̄)(y - ȳ) / (M - 1)`; the SE is `√((m₂₂ - ĉ²)/M)` with
/// `m₂₂` the mean of `(x - x̄)²(y - ȳ)²`.
pub fn unbiased_cov(xs: &[f64], ys: &[f64]) -> Result<CovEstimate, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    let m = xs.len();
    if m < 2 {
        return Err(StatsError::TooFewSamples { got: m, min: 2 });
    }
    let (mx, my) = (mean(xs), mean(ys));
    let prods: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let s = sum_compensated(prods.iter().copied());
    let cov = s / (m - 1) as f64;
    let pop = s / m as f64;
    let m22 = sum_compensated(prods.iter().map(|p| p * p)) / m as f64;
    let se = ((m22 - pop * pop).max(0.0) / m as f64).sqrt();
    Ok(CovEstimate { cov, se })
}

/// Asymptotic Kolmogorov tail `P(D_n > d)` with Stephens' finite-n correction.
pub fn kolmogorov_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut acc = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        acc += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * acc).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalityReport {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub ks_distance: f64,
    pub p_value: f64,
    pub sigma2_theory: f64,
    pub kurtosis_threshold: f64,
    pub ks_threshold: f64,
    pub degenerate: bool,
    pub passed: bool,
}

/// Moment diagnostics plus a Kolmogorov–Smirnov test against the fully
/// specified `N(0, σ²_theory)`. Passing requires `|excess kurtosis| ≤ 5√(24/M)`
/// and `D ≤ 1.63/√M`.
pub fn normality_test(xs: &[f64], sigma2_theory: f64) -> Result<NormalityReport, StatsError> {
    if !(sigma2_theory > 0.0) {
        return Err(StatsError::NonPositiveVariance(sigma2_theory));
    }
    let n = xs.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples { got: n, min: 2 });
    }
    let nf = n as f64;
    let mu = mean(xs);
    let m2 = sum_compensated(xs.iter().map(|x| (x - mu).powi(2))) / nf;
    let m3 = sum_compensated(xs.iter().map(|x| (x - mu).powi(3))) / nf;
    let m4 = sum_compensated(xs.iter().map(|x| (x - mu).powi(4))) / nf;
    let degenerate = m2 <= f64::MIN_POSITIVE || !m2.is_finite();
    let (skewness, excess_kurtosis) = if degenerate { (0.0, 0.0) } else { (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0) };

    let normal = Normal::new(0.0, sigma2_theory.sqrt()).expect("positive scale");
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ks_distance = sorted.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = normal.cdf(x);
        d.max(f - i as f64 / nf).max((i + 1) as f64 / nf - f)
    });
    let kurtosis_threshold = 5.0 * (24.0 / nf).sqrt();
    let ks_threshold = 1.63 / nf.sqrt();
    let passed = !degenerate && excess_kurtosis.abs() <= kurtosis_threshold && ks_distance <= ks_threshold;
    Ok(NormalityReport {
        n,
        mean: mu,
        variance: m2 * nf / (nf - 1.0),
        skewness,
        excess_kurtosis,
        ks_distance,
        p_value: kolmogorov_pvalue(ks_distance, n),
        sigma2_theory,
        kurtosis_threshold,
        ks_threshold,
        degenerate,
        passed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; needs at least three points.
    pub stderr: Option<f64>,
}

/// Least squares of `log var` on `log k`.
pub fn powerlaw_fit(ks: &[f64], vars: &[f64]) -> Result<PowerLawFit, StatsError> {
    if ks.len() != vars.len() {
        return Err(StatsError::LengthMismatch(ks.len(), vars.len()));
    }
    if ks.len() < 2 {
        return Err(StatsError::TooFewSamples { got: ks.len(), min: 2 });
    }
    if ks.iter().chain(vars).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(StatsError::NonPositiveInput);
    }
    let x: Vec<f64> = ks.iter().map(|k| k.ln()).collect();
    let y: Vec<f64> = vars.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&x), mean(&y));
    let sxx = sum_compensated(x.iter().map(|a| (a - mx).powi(2)));
    if sxx == 0.0 {
        return Err(StatsError::TooFewSamples { got: 1, min: 2 });
    }
    let sxy = sum_compensated(x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let n = x.len();
    let stderr = (n > 2).then(|| {
        let rss = sum_compensated(x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)));
        (rss / (n - 2) as f64 / sxx).sqrt()
    });
    Ok(PowerLawFit { slope, intercept, stderr })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_examples() {
        let c = unbiased_cov(&[0.0, 2.0], &[0.0, 2.0]).unwrap();
        assert_eq!(c.cov, 2.0);
        let c = unbiased_cov(&[1.0, 5.0, -2.0], &[3.0, 3.0, 3.0]).unwrap();
        assert_eq!(c.cov, 0.0);
        assert!(unbiased_cov(&[1.0], &[1.0]).is_err());
        assert!(unbiased_cov(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn powerlaw_examples() {
        let ks: Vec<f64> = (1..=16).map(f64::from).collect();
        let inv: Vec<f64> = ks.iter().map(|k| 1.0 / k).collect();
        let fit = powerlaw_fit(&ks, &inv).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-14);
        assert!(fit.intercept.abs() < 1e-14);
        let flat = powerlaw_fit(&ks, &vec![3.0; 16]).unwrap();
        assert!(flat.slope.abs() < 1e-14);
        assert!(powerlaw_fit(&[1.0, 2.0], &[1.0, 0.0]).is_err());
        assert!(powerlaw_fit(&[2.0], &[1.0]).is_err());
        assert!(powerlaw_fit(&[2.0, 2.0], &[1.0, 3.0]).is_err());
    }

    #[test]
    fn degenerate_sample_is_flagged() {
        let r = normality_test(&vec![0.0; 600], 1.0).unwrap();
        assert!(r.degenerate);
        assert!(!r.passed);
        assert!(normality_test(&[0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn kolmogorov_tail_reference_points() {
        // large-n limits: P(K > 1.36) ≈ 0.0494, P(K > 1.63) ≈ 0.0098
        assert!((kolmogorov_pvalue(1.36 / 1e4, 100_000_000) - 0.0494).abs() < 5e-4);
        assert!((kolmogorov_pvalue(1.63 / 1e4, 100_000_000) - 0.0098).abs() < 2e-4);
        assert_eq!(kolmogorov_pvalue(0.0, 10), 1.0);
    }
}
