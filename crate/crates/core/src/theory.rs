//! Closed-form covariance theory: the log and counting kernels, Chebyshev
//! coefficients on `[-2, 2]`, the variance forms `Q` and `V`, the
//! `d_n`-series for `V_log` and `V_cnt`, and the Gaussian limit field.
//!
//! Every covariance can be computed two ways (series and kernel double
//! integral) so that each serves as an oracle for the other.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::RngStream;
use crate::quadrature::QuadratureRule;
use crate::scalar::Real;
use crate::sum::CompensatedSum;
use crate::testfn::TestFunction;

pub const DEFAULT_N_QUAD: usize = 8192;
pub const DEFAULT_N_MAX: usize = 512;
/// Relative size of the last-decile tail above which a series is flagged.
pub const TAIL_WARNING: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("kernel is singular on the diagonal (E = E' = {0})")]
    Singular(f64),
    #[error("{0} lies outside (-2, 2)")]
    Domain(f64),
    #[error("s4 = {0} violates s4 >= -2")]
    InvalidS4(f64),
    #[error("truncation order {got} below the minimum {min}")]
    InvalidOrder { got: usize, min: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Log,
    Cnt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub s4: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, s4: f64) -> Result<Self, TheoryError> {
        check_s4(s4)?;
        Ok(Self { kind, s4 })
    }
}

fn check_s4(s4: f64) -> Result<(), TheoryError> {
    if s4.is_nan() || s4 < -2.0 {
        Err(TheoryError::InvalidS4(s4))
    } else {
        Ok(())
    }
}

fn check_bulk<T: Real>(e: T) -> Result<(), TheoryError> {
    if e.is_nan() || e.abs() >= T::lit(2.0) {
        Err(TheoryError::Domain(e.as_f64()))
    } else {
        Ok(())
    }
}

#[inline]
fn semicircle_root<T: Real>(e: T) -> T {
    (T::lit(4.0) - e * e).max(T::zero()).sqrt()
}

/// The smooth part `log((4 - EE' + √(4-E²)√(4-E'²)) / 2)` of the counting kernel.
#[inline]
fn cnt_regular<T: Real>(e: T, f: T) -> T {
    ((T::lit(4.0) - e * f + semicircle_root(e) * semicircle_root(f)) / T::lit(2.0)).ln()
}

/// `K_log(E, E')` or `K_cnt(E, E')`.
pub fn kernel_eval<T: Real>(spec: &KernelSpec, e: T, f: T) -> Result<T, TheoryError> {
    check_bulk(e)?;
    check_bulk(f)?;
    if e == f {
        return Err(TheoryError::Singular(e.as_f64()));
    }
    let (e, f) = if e < f { (e, f) } else { (f, e) };
    let s4 = T::lit(spec.s4);
    let log_gap = (e - f).abs().ln();
    Ok(match spec.kind {
        KernelKind::Log => {
            let two = T::lit(2.0);
            -log_gap + s4 / T::lit(8.0) * (two - e * e) * (two - f * f)
        }
        KernelKind::Cnt => {
            let pi2 = T::PI() * T::PI();
            let corr = s4 / (T::lit(8.0) * pi2) * e * f * semicircle_root(e) * semicircle_root(f);
            (cnt_regular(e, f) - log_gap) / pi2 + corr
        }
    })
}

/// `α = arccos(E/2)`.
pub fn arccos_half<T: Real>(e: T) -> Result<T, TheoryError> {
    check_bulk(e)?;
    Ok((e / T::lit(2.0)).acos())
}

/// `c_k(f)` by the `n_quad`-point trapezoid rule in `θ`.
pub fn cheb_coeff_generic<T: Real, F: Fn(T) -> T>(f: F, k: usize, n_quad: usize) -> T {
    let kf = T::from_usize_lossy(k);
    let h = T::lit(2.0) * T::PI() / T::from_usize_lossy(n_quad);
    let acc: CompensatedSum<T> = (0..n_quad)
        .map(|j| {
            let theta = -T::PI() + h * T::from_usize_lossy(j);
            f(T::lit(2.0) * theta.cos()) * (kf * theta).cos()
        })
        .collect();
    acc.value() * h / T::PI()
}

/// `c_1(f), …, c_{n_max}(f)` with the last-decile size recorded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChebCoeffs<T> {
    pub values: Vec<T>,
    pub n_max: usize,
    pub tail: T,
}

impl<T: Real> ChebCoeffs<T> {
    pub fn from_values(values: Vec<T>) -> Self {
        let n_max = values.len();
        let start = n_max - n_max / 10;
        let tail = values[start.min(n_max.saturating_sub(1))..].iter().fold(T::zero(), |m, v| m.max(v.abs()));
        Self { values, n_max, tail }
    }

    /// Trapezoid in `θ` with `n_quad` nodes (even), using `θ ↦ -θ` symmetry.
    pub fn from_fn<F: Fn(T) -> T>(f: F, n_max: usize, n_quad: usize) -> Self {
        let half = n_quad / 2;
        let h = T::lit(2.0) * T::PI() / T::from_usize_lossy(2 * half);
        let nodes: Vec<(T, T)> = (0..=half)
            .map(|j| {
                let w = if j == 0 || j == half { h / T::lit(2.0) } else { h };
                (h * T::from_usize_lossy(j), w)
            })
            .collect();
        Self::from_theta_nodes(f, n_max, &nodes, T::lit(2.0) / T::PI())
    }

    /// Composite Gauss–Legendre in `θ ∈ [0, π]`, graded toward `arccos(E/2)`
    /// for each `E` in `breaks`; for integrands with log or jump
    /// singularities at those points.
    pub fn from_fn_with_breaks<F: Fn(T) -> T>(f: F, n_max: usize, breaks: &[T], rule: &QuadratureRule<T>) -> Self {
        let mut cuts: Vec<T> = breaks.iter().map(|&e| (e / T::lit(2.0)).acos()).filter(|t| !t.is_nan()).collect();
        cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite breaks"));
        cuts.dedup();
        let mut ends = vec![T::zero()];
        ends.extend(cuts.iter().copied().filter(|&t| t > T::zero() && t < T::PI()));
        ends.push(T::PI());
        let h = (T::PI() / T::lit(8.0)).min(T::lit(4.0) * T::PI() / T::from_usize_lossy(n_max.max(1)));
        let last = ends.len() - 1;
        let mut nodes = Vec::new();
        for (i, w) in ends.windows(2).enumerate() {
            nodes.extend(rule.graded_nodes(w[0], w[1], i > 0, i + 1 < last, h));
        }
        Self::from_theta_nodes(f, n_max, &nodes, T::lit(2.0) / T::PI())
    }

    fn from_theta_nodes<F: Fn(T) -> T>(f: F, n_max: usize, nodes: &[(T, T)], scale: T) -> Self {
        let mut acc: Vec<CompensatedSum<T>> = vec![CompensatedSum::new(); n_max];
        let two = T::lit(2.0);
        for &(theta, w) in nodes {
            let c = theta.cos();
            let fw = f(two * c) * w;
            let (mut prev, mut cur) = (T::one(), c);
            for slot in acc.iter_mut() {
                slot.add(fw * cur);
                let next = two * c * cur - prev;
                prev = cur;
                cur = next;
            }
        }
        Self::from_values(acc.into_iter().map(|s| s.value() * scale).collect())
    }

    /// `c_k`, or zero beyond the truncation.
    pub fn get(&self, k: usize) -> T {
        if k == 0 || k > self.n_max {
            T::zero()
        } else {
            self.values[k - 1]
        }
    }
}

/// A truncated series with its last-decile contribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesValue<T> {
    pub value: T,
    pub tail: T,
    pub n_max: usize,
    pub warning: bool,
}

impl<T: Real> SeriesValue<T> {
    fn from_terms(terms: impl IntoIterator<Item = T>, n_max: usize) -> Self {
        let start = n_max - n_max / 10;
        let mut sum = CompensatedSum::new();
        let mut head = T::zero();
        let mut tail = T::zero();
        for (i, t) in terms.into_iter().enumerate() {
            sum.add(t);
            head += t.abs();
            if i + 1 > start {
                tail += t.abs();
            }
        }
        let warning = tail > T::lit(TAIL_WARNING) * head;
        Self { value: sum.value(), tail, n_max, warning }
    }
}

/// `c_k(F_E) = -(2/k) cos kα`.
pub fn c_log_point<T: Real>(e: T, k: usize) -> Result<T, TheoryError> {
    let alpha = arccos_half(e)?;
    let kf = T::from_usize_lossy(k);
    Ok(-T::lit(2.0) / kf * (kf * alpha).cos())
}

/// `c_k(H_E) = -(2/(πk)) sin kα`, `H_E = 1{x ≤ E}`.
pub fn c_cnt_point<T: Real>(e: T, k: usize) -> Result<T, TheoryError> {
    let alpha = arccos_half(e)?;
    let kf = T::from_usize_lossy(k);
    Ok(-T::lit(2.0) / (T::PI() * kf) * (kf * alpha).sin())
}

/// `c_k(F_φ) = -(2/k) d_k(φ)`.
pub fn c_log_test<T: Real>(phi: &TestFunction<T>, k: usize) -> T {
    -T::lit(2.0) / T::from_usize_lossy(k) * phi.d_coeff(k)
}

/// `c_1(F_φ), …, c_{n_max}(F_φ)`.
pub fn c_log_tests<T: Real>(phi: &TestFunction<T>, n_max: usize) -> ChebCoeffs<T> {
    let d = phi.d_coeffs(n_max);
    ChebCoeffs::from_values(d.iter().enumerate().map(|(i, &v)| -T::lit(2.0) / T::from_usize_lossy(i + 1) * v).collect())
}

/// `c_k(G_φ) = -(1/(πk)) ∫ φ(E) U_{k-1}(E/2) √(4 - E²) dE`.
pub fn c_cnt_test<T: Real>(phi: &TestFunction<T>, k: usize) -> T {
    c_cnt_tests(phi, k).get(k)
}

/// `c_1(G_φ), …, c_{n_max}(G_φ)` by the second-kind recurrence.
pub fn c_cnt_tests<T: Real>(phi: &TestFunction<T>, n_max: usize) -> ChebCoeffs<T> {
    let u = phi.u_coeffs(n_max);
    ChebCoeffs::from_values(u.iter().enumerate().map(|(i, &v)| -v / (T::PI() * T::from_usize_lossy(i + 1))).collect())
}

/// `c_k(G_φ)` through the sine form `-(2/(πk)) ∫ φ(E) sin(k arccos(E/2)) dE`.
pub fn c_cnt_test_sine<T: Real>(phi: &TestFunction<T>, k: usize) -> T {
    let kf = T::from_usize_lossy(k);
    let omega = phi.chebyshev_frequency(k);
    let integral = phi.integrate_against(|e| (kf * (e / T::lit(2.0)).acos()).sin(), omega);
    -T::lit(2.0) / (T::PI() * kf) * integral
}

/// `Q(f) = ½ Σ k c_k² + (s4/2) c_2²`, truncated at the coefficients' length.
pub fn q_form<T: Real>(c: &ChebCoeffs<T>, s4: f64) -> SeriesValue<T> {
    v_coeffs(c, c, s4)
}

/// The polarization of [`q_form`] evaluated on two coefficient sequences.
pub fn v_coeffs<T: Real>(c: &ChebCoeffs<T>, d: &ChebCoeffs<T>, s4: f64) -> SeriesValue<T> {
    let n = c.n_max.min(d.n_max);
    let half = T::lit(0.5);
    let mut out = SeriesValue::from_terms((1..=n).map(|k| half * T::from_usize_lossy(k) * c.get(k) * d.get(k)), n);
    out.value += half * T::lit(s4) * c.get(2) * d.get(2);
    out
}

/// `V(f, g)` from trapezoid coefficients of both functions.
pub fn v_form<T: Real, F: Fn(T) -> T, G: Fn(T) -> T>(f: F, g: G, s4: f64, n_max: usize) -> SeriesValue<T> {
    let cf = ChebCoeffs::from_fn(f, n_max, DEFAULT_N_QUAD);
    let cg = ChebCoeffs::from_fn(g, n_max, DEFAULT_N_QUAD);
    v_coeffs(&cf, &cg, s4)
}

/// `V_log(φ, ψ) = Σ (2/n) d_n(φ) d_n(ψ) + (s4/2) d_2(φ) d_2(ψ)`.
pub fn v_log_series<T: Real>(
    phi: &TestFunction<T>,
    psi: &TestFunction<T>,
    s4: f64,
    n_max: usize,
) -> Result<SeriesValue<T>, TheoryError> {
    check_s4(s4)?;
    if n_max < 2 {
        return Err(TheoryError::InvalidOrder { got: n_max, min: 2 });
    }
    let dp = phi.d_coeffs(n_max);
    let dq = psi.d_coeffs(n_max);
    Ok(v_log_series_from_d(&dp, &dq, s4))
}

/// [`v_log_series`] on precomputed `d_n`.
pub fn v_log_series_from_d<T: Real>(dp: &[T], dq: &[T], s4: f64) -> SeriesValue<T> {
    let n = dp.len().min(dq.len());
    let two = T::lit(2.0);
    let mut out = SeriesValue::from_terms((0..n).map(|i| two / T::from_usize_lossy(i + 1) * dp[i] * dq[i]), n);
    if n >= 2 {
        out.value += T::lit(s4) / two * dp[1] * dq[1];
    }
    out
}

/// `V_cnt(φ, ψ) = V(G_φ, G_ψ)` from the second-kind coefficients.
pub fn v_cnt_series<T: Real>(
    phi: &TestFunction<T>,
    psi: &TestFunction<T>,
    s4: f64,
    n_max: usize,
) -> Result<SeriesValue<T>, TheoryError> {
    check_s4(s4)?;
    if n_max < 2 {
        return Err(TheoryError::InvalidOrder { got: n_max, min: 2 });
    }
    Ok(v_coeffs(&c_cnt_tests(phi, n_max), &c_cnt_tests(psi, n_max), s4))
}

/// Series covariance for either field.
pub fn v_series<T: Real>(
    spec: &KernelSpec,
    phi: &TestFunction<T>,
    psi: &TestFunction<T>,
    n_max: usize,
) -> Result<SeriesValue<T>, TheoryError> {
    match spec.kind {
        KernelKind::Log => v_log_series(phi, psi, spec.s4, n_max),
        KernelKind::Cnt => v_cnt_series(phi, psi, spec.s4, n_max),
    }
}

/// `∬ φ(E) K(E, E') ψ(E') dE dE'`: the logarithmic part as `-∫ ψ F_φ`, the
/// rest as a smooth tensor-product integral.
pub fn v_quadrature<T: Real>(
    spec: &KernelSpec,
    phi: &TestFunction<T>,
    psi: &TestFunction<T>,
) -> Result<T, TheoryError> {
    check_s4(spec.s4)?;
    let omega_phi = T::lit(4.0) * T::PI() / phi.resolution();
    let omega_psi = T::lit(4.0) * T::PI() / psi.resolution();
    let omega = omega_phi.max(omega_psi);
    let log_part = -psi.integrate_against(|e| phi.f_transform(e), omega);
    let s4 = T::lit(spec.s4);
    let two = T::lit(2.0);
    Ok(match spec.kind {
        KernelKind::Log => {
            let m_phi = phi.integrate_against(|e| two - e * e, T::zero());
            let m_psi = psi.integrate_against(|e| two - e * e, T::zero());
            log_part + s4 / T::lit(8.0) * m_phi * m_psi
        }
        KernelKind::Cnt => {
            let pi2 = T::PI() * T::PI();
            let regular = psi.integrate_against(|f| phi.integrate_against(|e| cnt_regular(e, f), omega_psi), omega_phi);
            let m_phi = phi.integrate_against(|e| e * semicircle_root(e), T::zero());
            let m_psi = psi.integrate_against(|e| e * semicircle_root(e), T::zero());
            (log_part + regular) / pi2 + s4 / (T::lit(8.0) * pi2) * m_phi * m_psi
        }
    })
}

/// `-2 Σ_{k ≤ n_max} cos(kα) cos(kθ) / k`.
pub fn log_series_partial<T: Real>(alpha: T, theta: T, n_max: usize) -> T {
    let two = T::lit(2.0);
    let s: CompensatedSum<T> = (1..=n_max)
        .map(|k| {
            let kf = T::from_usize_lossy(k);
            (kf * alpha).cos() * (kf * theta).cos() / kf
        })
        .collect();
    -two * s.value()
}

/// `2 Σ_{k ≤ n_max} sin(kα) sin(kβ) / k`.
pub fn sine_series_partial<T: Real>(alpha: T, beta: T, n_max: usize) -> T {
    let s: CompensatedSum<T> = (1..=n_max)
        .map(|k| {
            let kf = T::from_usize_lossy(k);
            (kf * alpha).sin() * (kf * beta).sin() / kf
        })
        .collect();
    T::lit(2.0) * s.value()
}

/// `log|sin((α+β)/2) / sin((α-β)/2)|`.
pub fn sine_series_closed_form<T: Real>(alpha: T, beta: T) -> T {
    let two = T::lit(2.0);
    (((alpha + beta) / two).sin() / ((alpha - beta) / two).sin()).abs().ln()
}

/// `α_n(F) = (1/π) ∫ F(λ) T_n(λ/2) / √(4 - λ²) dλ = c_n(F) / 2`.
pub fn arcsine_coeff<T: Real, F: Fn(T) -> T>(f: F, n: usize, n_quad: usize) -> T {
    cheb_coeff_generic(f, n, n_quad) / T::lit(2.0)
}

/// Standard normal coefficients of one draw of the limit field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitFieldSample<T> {
    pub coeffs: Vec<T>,
    pub s4: f64,
    pub n_max: usize,
}

/// Synthesis weight of mode `n`: `√(2/n)`, and `√(1 + s4/2)` at `n = 2`.
pub fn limit_field_weight<T: Real>(n: usize, s4: f64) -> T {
    if n == 2 {
        T::lit(1.0 + s4 / 2.0).max(T::zero()).sqrt()
    } else {
        (T::lit(2.0) / T::from_usize_lossy(n)).sqrt()
    }
}

impl<T: Real> LimitFieldSample<T> {
    pub fn synthesize(s4: f64, n_max: usize, stream: RngStream) -> Result<Self, TheoryError> {
        check_s4(s4)?;
        if n_max < 2 {
            return Err(TheoryError::InvalidOrder { got: n_max, min: 2 });
        }
        let mut rng = stream.rng();
        let coeffs = (0..n_max).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect();
        Ok(Self { coeffs, s4, n_max })
    }

    /// `Σ w_n a_n d_n` for precomputed `d_1, d_2, …`.
    pub fn pair_coeffs(&self, d: &[T]) -> T {
        let s: CompensatedSum<T> = self
            .coeffs
            .iter()
            .zip(d)
            .enumerate()
            .map(|(i, (&a, &dn))| limit_field_weight::<T>(i + 1, self.s4) * a * dn)
            .collect();
        s.value()
    }

    /// `X^log[φ]` for this draw.
    pub fn pair(&self, phi: &TestFunction<T>) -> T {
        self.pair_coeffs(&phi.d_coeffs(self.n_max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_examples() {
        let log0 = KernelSpec::new(KernelKind::Log, 0.0).unwrap();
        let log1 = KernelSpec::new(KernelKind::Log, 1.0).unwrap();
        let cnt0 = KernelSpec::new(KernelKind::Cnt, 0.0).unwrap();
        assert_eq!(kernel_eval(&log0, 0.0, 1.0).unwrap(), 0.0);
        assert!((kernel_eval(&log1, 0.0f64, 1.0).unwrap() - 0.25).abs() < 1e-15);
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((kernel_eval(&cnt0, 1.0, -1.0).unwrap() - 2f64.ln() / pi2).abs() < 1e-15);
        assert!(matches!(kernel_eval(&log0, 0.3, 0.3), Err(TheoryError::Singular(_))));
        assert!(matches!(kernel_eval(&cnt0, 2.0, 0.3), Err(TheoryError::Domain(_))));
        assert!(KernelSpec::new(KernelKind::Log, -2.5).is_err());
    }

    #[test]
    fn point_coefficient_examples() {
        assert!(c_log_point(0.0f64, 1).unwrap().abs() < 1e-15);
        assert!((c_log_point(0.0f64, 2).unwrap() - 1.0).abs() < 1e-15);
        assert!((c_log_point(1.0f64, 3).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((c_cnt_point(0.0, 1).unwrap() + 2.0 / std::f64::consts::PI).abs() < 1e-15);
        assert!(c_cnt_point(0.0f64, 2).unwrap().abs() < 1e-15);
        assert!(c_cnt_point(2f64.sqrt(), 4).unwrap().abs() < 1e-15);
        assert!(c_log_point(-2.0, 1).is_err());
    }

    #[test]
    fn weights_at_jensen_boundary() {
        assert_eq!(limit_field_weight::<f64>(2, -2.0), 0.0);
        assert_eq!(limit_field_weight::<f64>(2, 0.0), 1.0);
        assert_eq!(limit_field_weight::<f64>(8, 0.3), 0.5);
        assert!(LimitFieldSample::<f64>::synthesize(-2.1, 8, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn coefficient_tail_is_last_decile() {
        let c = ChebCoeffs::from_values((1..=20).map(|k| 1.0 / k as f64).collect());
        assert_eq!(c.tail, 1.0 / 19.0);
        assert_eq!(c.get(0), 0.0);
        assert_eq!(c.get(21), 0.0);
    }
}
