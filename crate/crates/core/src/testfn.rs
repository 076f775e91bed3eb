//! The interval `I = [a, b]`, its Dirichlet sine basis, smooth bumps, and the
//! two transforms that turn a test function into a linear statistic:
//!
//! * `F_φ(x) = ∫_I φ(E) log|E - x| dE` (log-determinant field),
//! * `G_φ(x) = ∫_x^∞ φ(E) dE` (counting field).

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{uniform_breaks, QuadratureRule};
use crate::scalar::Real;
use crate::special::{log_minus_cos_ci, si};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TestFnError {
    #[error("interval [{a}, {b}] must satisfy -2 < a < b < 2")]
    InvalidInterval { a: f64, b: f64 },
    #[error("Dirichlet mode index must be positive")]
    ZeroMode,
    #[error("bump halfwidth must be positive, got {0}")]
    InvalidHalfwidth(f64),
    #[error("bump support [{lo}, {hi}] must lie strictly inside ({a}, {b})")]
    BumpOutsideInterval { lo: f64, hi: f64, a: f64, b: f64 },
    #[error("linear combination needs at least one term")]
    EmptyCombination,
    #[error("linear combination mixes test functions on different intervals")]
    IntervalMismatch,
}

/// Compact interval strictly inside the bulk `(-2, 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    a: T,
    b: T,
}

impl<T: Real> Interval<T> {
    pub fn new(a: T, b: T) -> Result<Self, TestFnError> {
        let two = T::lit(2.0);
        if !(a > -two && a < b && b < two) {
            return Err(TestFnError::InvalidInterval { a: a.as_f64(), b: b.as_f64() });
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> T {
        self.a
    }

    pub fn b(&self) -> T {
        self.b
    }

    pub fn length(&self) -> T {
        self.b - self.a
    }

    pub fn contains(&self, x: T) -> bool {
        x >= self.a && x <= self.b
    }

    /// Dirichlet eigenvalue `μ_k = (πk/L)²` of `-d²/dx²` on the interval.
    pub fn dirichlet_eigenvalue(&self, k: usize) -> T {
        let kappa = T::PI() * T::from_usize_lossy(k) / self.length();
        kappa * kappa
    }
}

/// Serializable description of a test function, as written in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FunctionSpec {
    Dirichlet { k: usize },
    Bump { center: f64, halfwidth: f64 },
    Combination { terms: Vec<(f64, FunctionSpec)> },
}

impl FunctionSpec {
    /// Short identifier used in CSV columns.
    pub fn label(&self) -> String {
        match self {
            FunctionSpec::Dirichlet { k } => format!("e{k}"),
            FunctionSpec::Bump { center, halfwidth } => format!("bump({center},{halfwidth})"),
            FunctionSpec::Combination { terms } => {
                let parts: Vec<String> = terms.iter().map(|(c, f)| format!("{c}*{}", f.label())).collect();
                format!("[{}]", parts.join("+"))
            }
        }
    }

    pub fn dirichlet_index(&self) -> Option<usize> {
        match self {
            FunctionSpec::Dirichlet { k } => Some(*k),
            _ => None,
        }
    }
}

/// `∫_{-1}^{1} exp(-1/(1-t²)) dt`, the mass of the unnormalized mollifier.
fn mollifier_mass<T: Real>(rule: &QuadratureRule<T>) -> T {
    rule.integrate(mollifier, -T::one(), T::one(), T::lit(1.0 / 32.0))
}

#[inline]
fn mollifier<T: Real>(t: T) -> T {
    let s = T::one() - t * t;
    if s <= T::zero() {
        T::zero()
    } else {
        (-T::one() / s).exp()
    }
}

#[derive(Debug, Clone)]
struct Bump<T> {
    center: T,
    halfwidth: T,
    scale: T,
    edges: Vec<T>,
    tails: Vec<T>,
}

impl<T: Real> Bump<T> {
    #[inline]
    fn eval(&self, e: T) -> T {
        self.scale * mollifier((e - self.center) / self.halfwidth)
    }
}

#[derive(Debug, Clone)]
enum Kind<T> {
    Dirichlet { k: usize, kappa: T, amp: T },
    Bump(Bump<T>),
    Combination(Vec<(T, TestFunction<T>)>),
}

/// A test function on `I`, supported in `[a, b]` and zero outside.
#[derive(Debug, Clone)]
pub struct TestFunction<T> {
    kind: Kind<T>,
    interval: Interval<T>,
    rule: Arc<QuadratureRule<T>>,
}

impl<T: Real> TestFunction<T> {
    /// `e_k(E) = √(2/L) sin(πk(E-a)/L)`.
    pub fn dirichlet(interval: Interval<T>, k: usize, rule: Arc<QuadratureRule<T>>) -> Result<Self, TestFnError> {
        if k == 0 {
            return Err(TestFnError::ZeroMode);
        }
        let l = interval.length();
        let kappa = T::PI() * T::from_usize_lossy(k) / l;
        let amp = (T::lit(2.0) / l).sqrt();
        Ok(Self { kind: Kind::Dirichlet { k, kappa, amp }, interval, rule })
    }

    /// Standard mollifier `∝ exp(-1/(1-t²))`, `t = (E - center)/halfwidth`,
    /// normalized to unit mass. Its support must lie strictly inside `(a, b)`.
    pub fn bump(
        interval: Interval<T>,
        center: T,
        halfwidth: T,
        rule: Arc<QuadratureRule<T>>,
    ) -> Result<Self, TestFnError> {
        if !(halfwidth > T::zero()) {
            return Err(TestFnError::InvalidHalfwidth(halfwidth.as_f64()));
        }
        let (lo, hi) = (center - halfwidth, center + halfwidth);
        if !(lo > interval.a() && hi < interval.b()) {
            return Err(TestFnError::BumpOutsideInterval {
                lo: lo.as_f64(),
                hi: hi.as_f64(),
                a: interval.a().as_f64(),
                b: interval.b().as_f64(),
            });
        }
        let scale = T::one() / (halfwidth * mollifier_mass(&rule));
        let mut bump = Bump { center, halfwidth, scale, edges: Vec::new(), tails: Vec::new() };
        // right-tail integrals at panel edges
        let edges = uniform_breaks(lo, hi, halfwidth / T::lit(16.0));
        let mut tails = vec![T::zero(); edges.len()];
        for j in (0..edges.len() - 1).rev() {
            tails[j] = tails[j + 1] + rule.smooth().integrate(|e| bump.eval(e), edges[j], edges[j + 1]);
        }
        bump.edges = edges;
        bump.tails = tails;
        Ok(Self { kind: Kind::Bump(bump), interval, rule })
    }

    /// `Σ c_i φ_i`; every term must live on the same interval.
    pub fn combination(terms: Vec<(T, TestFunction<T>)>) -> Result<Self, TestFnError> {
        let first = terms.first().ok_or(TestFnError::EmptyCombination)?;
        let interval = first.1.interval;
        let rule = first.1.rule.clone();
        if terms.iter().any(|(_, f)| f.interval != interval) {
            return Err(TestFnError::IntervalMismatch);
        }
        Ok(Self { kind: Kind::Combination(terms), interval, rule })
    }

    pub fn from_spec(
        spec: &FunctionSpec,
        interval: Interval<T>,
        rule: Arc<QuadratureRule<T>>,
    ) -> Result<Self, TestFnError> {
        match spec {
            FunctionSpec::Dirichlet { k } => Self::dirichlet(interval, *k, rule),
            FunctionSpec::Bump { center, halfwidth } => Self::bump(interval, T::lit(*center), T::lit(*halfwidth), rule),
            FunctionSpec::Combination { terms } => {
                let built = terms
                    .iter()
                    .map(|(c, f)| Ok((T::lit(*c), Self::from_spec(f, interval, rule.clone())?)))
                    .collect::<Result<Vec<_>, TestFnError>>()?;
                Self::combination(built)
            }
        }
    }

    pub fn interval(&self) -> Interval<T> {
        self.interval
    }

    pub fn rule(&self) -> &QuadratureRule<T> {
        &self.rule
    }

    /// Returns `k` when this is a single Dirichlet mode.
    pub fn dirichlet_index(&self) -> Option<usize> {
        match self.kind {
            Kind::Dirichlet { k, .. } => Some(k),
            _ => None,
        }
    }

    pub fn spec(&self) -> FunctionSpec {
        match &self.kind {
            Kind::Dirichlet { k, .. } => FunctionSpec::Dirichlet { k: *k },
            Kind::Bump(b) => FunctionSpec::Bump { center: b.center.as_f64(), halfwidth: b.halfwidth.as_f64() },
            Kind::Combination(terms) => {
                FunctionSpec::Combination { terms: terms.iter().map(|(c, f)| (c.as_f64(), f.spec())).collect() }
            }
        }
    }

    /// Smallest interval outside of which `φ` vanishes.
    pub fn support(&self) -> (T, T) {
        match &self.kind {
            Kind::Dirichlet { .. } => (self.interval.a(), self.interval.b()),
            Kind::Bump(b) => (b.center - b.halfwidth, b.center + b.halfwidth),
            Kind::Combination(terms) => terms.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), (_, f)| {
                let (l, h) = f.support();
                (lo.min(l), hi.max(h))
            }),
        }
    }

    /// Largest panel width on which a 32-node rule resolves `φ` to near machine precision.
    pub fn resolution(&self) -> T {
        match &self.kind {
            Kind::Dirichlet { k, .. } => {
                let l = self.interval.length();
                (T::lit(4.0) * l / T::from_usize_lossy(*k)).min(l / T::lit(2.0))
            }
            Kind::Bump(b) => b.halfwidth / T::lit(8.0),
            Kind::Combination(terms) => terms.iter().map(|(_, f)| f.resolution()).fold(T::infinity(), T::min),
        }
    }

    /// `φ(E)`; zero outside the support.
    pub fn eval(&self, e: T) -> T {
        match &self.kind {
            Kind::Dirichlet { kappa, amp, .. } => {
                if self.interval.contains(e) {
                    *amp * (*kappa * (e - self.interval.a())).sin()
                } else {
                    T::zero()
                }
            }
            Kind::Bump(b) => b.eval(e),
            Kind::Combination(terms) => terms.iter().fold(T::zero(), |acc, (c, f)| acc + *c * f.eval(e)),
        }
    }

    /// `∫_I φ`.
    pub fn integral(&self) -> T {
        self.g_transform(self.interval.a())
    }

    /// `∫ φ(E) g(E) dE` over the support, with panels that also resolve an
    /// oscillation of angular frequency up to `omega` in `g`.
    pub fn integrate_against<G: Fn(T) -> T>(&self, g: G, omega: T) -> T {
        self.integrate_against_dyn(&g, omega)
    }

    fn integrate_against_dyn(&self, g: &dyn Fn(T) -> T, omega: T) -> T {
        match &self.kind {
            Kind::Combination(terms) => {
                terms.iter().fold(T::zero(), |acc, (c, f)| acc + *c * f.integrate_against_dyn(g, omega))
            }
            _ => {
                let (lo, hi) = self.support();
                // two periods per 32-node panel
                let h_g = if omega > T::zero() { T::lit(4.0) * T::PI() / omega } else { T::infinity() };
                let h = self.resolution().min(h_g);
                self.rule.integrate(|e| self.eval(e) * g(e), lo, hi, h)
            }
        }
    }

    /// `F_φ(x) = ∫_I φ(E) log|E - x| dE`. Dirichlet modes use the closed form
    /// in sine and cosine integrals; everything else goes through
    /// [`f_transform_quadrature`](Self::f_transform_quadrature).
    pub fn f_transform(&self, x: T) -> T {
        match &self.kind {
            Kind::Dirichlet { k, kappa, amp } => self.dirichlet_log_closed_form(*k, *kappa, *amp, x),
            Kind::Bump(_) => self.f_transform_quadrature(x),
            Kind::Combination(terms) => terms.iter().fold(T::zero(), |acc, (c, f)| acc + *c * f.f_transform(x)),
        }
    }

    /// `F_φ(x)` by singularity subtraction and graded Gauss–Legendre panels.
    pub fn f_transform_quadrature(&self, x: T) -> T {
        match &self.kind {
            Kind::Combination(terms) => {
                terms.iter().fold(T::zero(), |acc, (c, f)| acc + *c * f.f_transform_quadrature(x))
            }
            _ => {
                let (lo, hi) = self.support();
                self.rule.log_convolution(|e| self.eval(e), lo, hi, x, self.resolution())
            }
        }
    }

    // Integrating by parts against cos(κ(E-a))/κ leaves principal values
    // that reduce to Si and Ci at κ|x-a| and κ|x-b|.
    fn dirichlet_log_closed_form(&self, k: usize, kappa: T, amp: T, x: T) -> T {
        let (a, b) = (self.interval.a(), self.interval.b());
        let parity = if k % 2 == 0 { T::one() } else { -T::one() };
        let left = log_minus_cos_ci((x - a).abs(), kappa);
        let right = log_minus_cos_ci((x - b).abs(), kappa);
        let si_diff = si(kappa * (b - x)) - si(kappa * (a - x));
        amp / kappa * (left - parity * right - (kappa * (x - a)).sin() * si_diff)
    }

    /// `G_φ(x) = ∫_x^∞ φ(E) dE`.
    pub fn g_transform(&self, x: T) -> T {
        match &self.kind {
            Kind::Dirichlet { k, kappa, amp } => {
                let (a, b) = (self.interval.a(), self.interval.b());
                let parity = if k % 2 == 0 { T::one() } else { -T::one() };
                let c = if x <= a {
                    T::one()
                } else if x >= b {
                    return T::zero();
                } else {
                    (*kappa * (x - a)).cos()
                };
                *amp / *kappa * (c - parity)
            }
            Kind::Bump(bump) => {
                let edges = &bump.edges;
                let last = edges.len() - 1;
                if x <= edges[0] {
                    return bump.tails[0];
                }
                if x >= edges[last] {
                    return T::zero();
                }
                // panel j with edges[j] <= x < edges[j+1]
                let j = edges.partition_point(|&e| e <= x) - 1;
                bump.tails[j + 1] + self.rule.smooth().integrate(|e| bump.eval(e), x, edges[j + 1])
            }
            Kind::Combination(terms) => terms.iter().fold(T::zero(), |acc, (c, f)| acc + *c * f.g_transform(x)),
        }
    }

    /// `d_n(φ) = ∫_I φ(E) T_n(E/2) dE`.
    pub fn d_coeff(&self, n: usize) -> T {
        let omega = self.chebyshev_frequency(n);
        let nf = T::from_usize_lossy(n);
        self.integrate_against(|e| (nf * (e / T::lit(2.0)).acos()).cos(), omega)
    }

    /// `d_1(φ), …, d_{n_max}(φ)` in one pass, with `T_n` from the three-term recurrence.
    pub fn d_coeffs(&self, n_max: usize) -> Vec<T> {
        let mut out = vec![T::zero(); n_max];
        if n_max > 0 {
            self.accumulate_chebyshev(T::one(), n_max, false, &mut out);
        }
        out
    }

    /// `u_n(φ) = ∫_I φ(E) U_{n-1}(E/2) √(4 - E²) dE` for `n = 1, …, n_max`.
    pub fn u_coeffs(&self, n_max: usize) -> Vec<T> {
        let mut out = vec![T::zero(); n_max];
        if n_max > 0 {
            self.accumulate_chebyshev(T::one(), n_max, true, &mut out);
        }
        out
    }

    fn accumulate_chebyshev(&self, weight: T, n_max: usize, second_kind: bool, out: &mut [T]) {
        if let Kind::Combination(terms) = &self.kind {
            for (c, f) in terms {
                f.accumulate_chebyshev(weight * *c, n_max, second_kind, out);
            }
            return;
        }
        let (lo, hi) = self.support();
        let omega = self.chebyshev_frequency(n_max);
        let h = self.resolution().min(T::lit(4.0) * T::PI() / omega);
        let gl = self.rule.smooth();
        let two = T::lit(2.0);
        for w in uniform_breaks(lo, hi, h).windows(2) {
            gl.for_each_node(w[0], w[1], |e, wt| {
                let mut fw = weight * wt * self.eval(e);
                let t = e / two;
                let (mut prev, mut cur) = if second_kind {
                    fw *= (T::lit(4.0) - e * e).sqrt();
                    (T::zero(), T::one())
                } else {
                    (T::one(), t)
                };
                for slot in out.iter_mut() {
                    *slot += fw * cur;
                    let next = two * t * cur - prev;
                    prev = cur;
                    cur = next;
                }
            });
        }
    }

    /// Largest angular frequency of `E ↦ T_n(E/2)` over the support.
    pub fn chebyshev_frequency(&self, n: usize) -> T {
        let (lo, hi) = self.support();
        let edge = lo.abs().max(hi.abs());
        T::from_usize_lossy(n) / (T::lit(4.0) - edge * edge).sqrt()
    }
}

impl TestFunction<f64> {
    pub fn dirichlet_std(interval: Interval<f64>, k: usize) -> Result<Self, TestFnError> {
        Self::dirichlet(interval, k, Arc::new(QuadratureRule::standard()))
    }

    pub fn bump_std(interval: Interval<f64>, center: f64, halfwidth: f64) -> Result<Self, TestFnError> {
        Self::bump(interval, center, halfwidth, Arc::new(QuadratureRule::standard()))
    }
}
