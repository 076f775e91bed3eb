//! Entry laws and Wigner matrix sampling.
//!
//! Off-diagonal entries are `N^{-1/2} χ_od` with `E χ_od² = 1`, diagonal entries
//! `N^{-1/2} χ_d` with `E χ_d² = 2`, and the cumulants are tied by
//! `s_k(χ_d) = 2^{k-1} s_k(χ_od)` for `k = 3, 4`. All three families are
//! symmetric Gaussian convolutions or mixtures, so every odd cumulant vanishes
//! and the densities are smooth with Gaussian tails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectra::SymMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("target variance must be positive and finite, got {0}")]
    NonPositiveVariance(f64),
    #[error("invalid {family} parameters: {reason}")]
    InvalidParameters { family: &'static str, reason: String },
    #[error("matrix dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("no diagonal law in the {family} family has fourth cumulant {required} at unit variance")]
    DiagonalInfeasible { family: &'static str, required: f64 },
}

/// Family of a centered, symmetric entry law together with its raw parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    /// `σ1 Z` with probability `p`, `σ2 Z` otherwise.
    ScaleMixture {
        p: f64,
        sigma1: f64,
        sigma2: f64,
    },
    /// `ε a + σ Z` with a fair sign `ε`.
    RademacherGauss {
        a: f64,
        sigma: f64,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::ScaleMixture { .. } => "scale_mixture",
            Family::RademacherGauss { .. } => "rademacher_gauss",
        }
    }

    /// `(E Y², E Y⁴)` of the unscaled law.
    fn raw_moments(&self) -> (f64, f64) {
        match *self {
            Family::Gaussian => (1.0, 3.0),
            Family::ScaleMixture { p, sigma1, sigma2 } => {
                let (v1, v2) = (sigma1 * sigma1, sigma2 * sigma2);
                (p * v1 + (1.0 - p) * v2, 3.0 * (p * v1 * v1 + (1.0 - p) * v2 * v2))
            }
            Family::RademacherGauss { a, sigma } => {
                let (a2, s2) = (a * a, sigma * sigma);
                (a2 + s2, a2 * a2 + 6.0 * a2 * s2 + 3.0 * s2 * s2)
            }
        }
    }

    fn validate(&self) -> Result<(), EnsembleError> {
        let bad = |reason: &str| Err(EnsembleError::InvalidParameters { family: self.name(), reason: reason.into() });
        match *self {
            Family::Gaussian => Ok(()),
            Family::ScaleMixture { p, sigma1, sigma2 } => {
                if !(p > 0.0 && p < 1.0) {
                    return bad("mixture weight p must lie in (0, 1)");
                }
                if !(sigma1.is_finite() && sigma2.is_finite()) {
                    return bad("scales must be finite");
                }
                if sigma1 == 0.0 && sigma2 == 0.0 {
                    return bad("sigma1 = sigma2 = 0 is a point mass");
                }
                if !(sigma1 > 0.0 && sigma2 > 0.0) {
                    return bad("both scales must be positive (a zero scale is an atom, not a smooth law)");
                }
                Ok(())
            }
            Family::RademacherGauss { a, sigma } => {
                if !(a > 0.0 && a.is_finite()) {
                    return bad("a must be positive");
                }
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return bad("sigma must be positive (sigma = 0 is a two-point law)");
                }
                Ok(())
            }
        }
    }
}

/// A family rescaled to a prescribed variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntryDistribution {
    family: Family,
    target_variance: f64,
    #[serde(skip)]
    scale: f64,
}

impl EntryDistribution {
    pub fn new(family: Family, target_variance: f64) -> Result<Self, EnsembleError> {
        if !(target_variance > 0.0 && target_variance.is_finite()) {
            return Err(EnsembleError::NonPositiveVariance(target_variance));
        }
        family.validate()?;
        let (var, _) = family.raw_moments();
        Ok(Self { family, target_variance, scale: (target_variance / var).sqrt() })
    }

    pub fn gaussian(target_variance: f64) -> Result<Self, EnsembleError> {
        Self::new(Family::Gaussian, target_variance)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn mean(&self) -> f64 {
        0.0
    }

    /// Closed-form variance; equals the target by construction.
    pub fn variance(&self) -> f64 {
        self.scale * self.scale * self.family.raw_moments().0
    }

    pub fn third_cumulant(&self) -> f64 {
        0.0
    }

    /// `E X⁴ - 3 (E X²)²` of the rescaled law.
    pub fn fourth_cumulant(&self) -> f64 {
        let (var, m4) = self.family.raw_moments();
        self.scale.powi(4) * (m4 - 3.0 * var * var)
    }

    /// Fourth cumulant of `X / sd(X)`.
    pub fn standardized_fourth_cumulant(&self) -> f64 {
        let v = self.variance();
        self.fourth_cumulant() / (v * v)
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        let y = match self.family {
            Family::Gaussian => z,
            Family::ScaleMixture { p, sigma1, sigma2 } => {
                let u: f64 = rng.random();
                if u < p {
                    sigma1 * z
                } else {
                    sigma2 * z
                }
            }
            Family::RademacherGauss { a, sigma } => {
                let sign = if rng.random::<bool>() { a } else { -a };
                sign + sigma * z
            }
        };
        self.scale * y
    }

    /// Diagonal law `√2 ξ` matched to this off-diagonal law: `ξ` has unit
    /// variance, the same family, and twice the standardized fourth cumulant,
    /// so `s_4(√2 ξ) = 8 s_4(χ_od)`.
    pub fn diagonal_partner(&self) -> Result<Self, EnsembleError> {
        let family = match self.family {
            Family::Gaussian => Family::Gaussian,
            Family::RademacherGauss { a, sigma } => {
                let unit_a2 = a * a / (a * a + sigma * sigma);
                let a2 = std::f64::consts::SQRT_2 * unit_a2;
                if a2 >= 1.0 {
                    return Err(EnsembleError::DiagonalInfeasible {
                        family: self.family.name(),
                        required: 2.0 * self.standardized_fourth_cumulant(),
                    });
                }
                Family::RademacherGauss { a: a2.sqrt(), sigma: (1.0 - a2).sqrt() }
            }
            Family::ScaleMixture { p, sigma1, sigma2 } => {
                let var = p * sigma1 * sigma1 + (1.0 - p) * sigma2 * sigma2;
                let stretch = |s: f64| 1.0 + std::f64::consts::SQRT_2 * (s * s / var - 1.0);
                let (v1, v2) = (stretch(sigma1), stretch(sigma2));
                if !(v1 > 0.0 && v2 > 0.0) {
                    return Err(EnsembleError::DiagonalInfeasible {
                        family: self.family.name(),
                        required: 2.0 * self.standardized_fourth_cumulant(),
                    });
                }
                Family::ScaleMixture { p, sigma1: v1.sqrt(), sigma2: v2.sqrt() }
            }
        };
        Self::new(family, 2.0)
    }
}

/// Matrix dimension together with the off-diagonal and diagonal entry laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n: usize,
    pub offdiag: EntryDistribution,
    pub diag: EntryDistribution,
}

impl EnsembleSpec {
    /// Ensemble whose diagonal law is derived from `offdiag` by
    /// [`EntryDistribution::diagonal_partner`]. `offdiag` is rescaled to unit variance.
    pub fn new(n: usize, offdiag: Family) -> Result<Self, EnsembleError> {
        if n < 2 {
            return Err(EnsembleError::DimensionTooSmall(n));
        }
        let offdiag = EntryDistribution::new(offdiag, 1.0)?;
        let diag = offdiag.diagonal_partner()?;
        Ok(Self { n, offdiag, diag })
    }

    /// Gaussian orthogonal ensemble.
    pub fn goe(n: usize) -> Result<Self, EnsembleError> {
        Self::new(n, Family::Gaussian)
    }

    /// Arbitrary pair of laws; use [`validate_assumption`] before running experiments.
    pub fn with_laws(n: usize, offdiag: EntryDistribution, diag: EntryDistribution) -> Self {
        Self { n, offdiag, diag }
    }

    pub fn with_dimension(&self, n: usize) -> Result<Self, EnsembleError> {
        if n < 2 {
            return Err(EnsembleError::DimensionTooSmall(n));
        }
        Ok(Self { n, ..*self })
    }

    /// `s_4 = s_4(χ_od)`.
    pub fn s4(&self) -> f64 {
        self.offdiag.fourth_cumulant()
    }
}

/// One closed-form check of the ensemble assumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub expected: f64,
    pub actual: f64,
    pub residual: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub passed: bool,
    pub checks: Vec<AssumptionCheck>,
    pub failures: Vec<String>,
}

const ASSUMPTION_TOL: f64 = 1e-12;

/// Closed-form verification of centering, the variance normalization, the
/// cumulant relation for `k = 3, 4`, and the Jensen constraint `s_4 ≥ -2`.
pub fn validate_assumption(spec: &EnsembleSpec) -> AssumptionReport {
    let od = &spec.offdiag;
    let d = &spec.diag;
    let mut checks = Vec::new();
    let mut failures = Vec::new();
    let mut check = |name: &str, failure: &str, expected: f64, actual: f64| {
        let residual = (actual - expected).abs();
        let passed = residual <= ASSUMPTION_TOL * expected.abs().max(1.0);
        if !passed {
            failures.push(failure.to_string());
        }
        checks.push(AssumptionCheck { name: name.into(), expected, actual, residual, passed });
    };
    check("offdiag mean", "off-diagonal mean ≠ 0", 0.0, od.mean());
    check("diag mean", "diagonal mean ≠ 0", 0.0, d.mean());
    check("offdiag variance", "off-diagonal variance ≠ 1", 1.0, od.variance());
    check("diag variance", "diagonal variance ≠ 2", 2.0, d.variance());
    check("s3 relation", "s_3(χ_d) ≠ 4 s_3(χ_od)", 4.0 * od.third_cumulant(), d.third_cumulant());
    check("s4 relation", "s_4(χ_d) ≠ 8 s_4(χ_od)", 8.0 * od.fourth_cumulant(), d.fourth_cumulant());

    let s4 = od.fourth_cumulant();
    let jensen = s4 >= -2.0;
    if !jensen {
        failures.push("s_4(χ_od) < -2 violates 1 + s_4/2 ≥ 0".into());
    }
    checks.push(AssumptionCheck {
        name: "jensen".into(),
        expected: -2.0,
        actual: s4,
        residual: (s4 + 2.0).min(0.0).abs(),
        passed: jensen,
    });
    if spec.n < 2 {
        failures.push(format!("dimension {} < 2", spec.n));
    }
    AssumptionReport { passed: failures.is_empty(), checks, failures }
}

/// Reproducible random stream addressed by `(master_seed, replica)`.
///
/// Backed by ChaCha8, a counter-based generator: the seed keys the cipher and
/// the replica index selects an independent 64-bit stream, so the draws of a
/// replica never depend on which thread produced them or in what order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub replica: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, replica: u64) -> Self {
        Self { master_seed, replica }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.replica);
        rng
    }
}

/// Samples `H` with `H_ij = N^{-1/2} χ_od` (`i < j`) and `H_ii = N^{-1/2} χ_d`.
/// Entries are drawn row by row from the upper triangle.
pub fn sample_matrix(spec: &EnsembleSpec, stream: RngStream) -> SymMatrix<f64> {
    let mut h = SymMatrix::zeros(spec.n);
    sample_matrix_into(spec, stream, &mut h);
    h
}

/// As [`sample_matrix`], reusing the storage of `out` (resized if needed).
pub fn sample_matrix_into(spec: &EnsembleSpec, stream: RngStream, out: &mut SymMatrix<f64>) {
    let n = spec.n;
    if out.n() != n {
        *out = SymMatrix::zeros(n);
    }
    let mut rng = stream.rng();
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    for i in 0..n {
        let v = spec.diag.sample(&mut rng) * inv_sqrt_n;
        out.set(i, i, v);
        for j in i + 1..n {
            let v = spec.offdiag.sample(&mut rng) * inv_sqrt_n;
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
}
