//! Gauss–Legendre panels and a log-singular convolution rule.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("Gauss-Legendre rule needs at least one node")]
    Empty,
    #[error("Gauss-Legendre rule with {nodes} nodes fails exactness on x^{degree} (residual {residual:e})")]
    NotExact { nodes: usize, degree: usize, residual: f64 },
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> GaussLegendre<T> {
    /// Builds the rule by Newton iteration on `P_n` (in `f64`) and checks that
    /// even monomials up to degree `2n - 2` are integrated exactly.
    pub fn new(n: usize) -> Result<Self, QuadratureError> {
        if n == 0 {
            return Err(QuadratureError::Empty);
        }
        let mut nodes = vec![0.0f64; n];
        let mut weights = vec![0.0f64; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }

        // exactness on x^{2j}, j < n
        let tol = (f64::EPSILON.max(T::epsilon().as_f64())) * 64.0 * nf;
        for j in 0..n {
            let deg = 2 * j;
            let approx: f64 = nodes.iter().zip(&weights).map(|(x, w)| w * x.powi(deg as i32)).sum();
            let exact = 2.0 / (deg as f64 + 1.0);
            let residual = (approx - exact).abs();
            if residual > tol {
                return Err(QuadratureError::NotExact { nodes: n, degree: deg, residual });
            }
        }

        Ok(Self { nodes: nodes.into_iter().map(T::lit).collect(), weights: weights.into_iter().map(T::lit).collect() })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Single panel `∫_a^b f`.
    #[inline]
    pub fn integrate<F: FnMut(T) -> T>(&self, mut f: F, a: T, b: T) -> T {
        let half = (b - a) * T::lit(0.5);
        let mid = (b + a) * T::lit(0.5);
        let mut acc = T::zero();
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// Calls `visit(x, w)` for every node of the mapped rule on `[a, b]`.
    #[inline]
    pub fn for_each_node<F: FnMut(T, T)>(&self, a: T, b: T, mut visit: F) {
        let half = (b - a) * T::lit(0.5);
        let mid = (b + a) * T::lit(0.5);
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            visit(mid + half * x, w * half);
        }
    }

    /// Composite rule over consecutive `breaks`.
    pub fn integrate_panels<F: FnMut(T) -> T>(&self, mut f: F, breaks: &[T]) -> T {
        let mut acc = T::zero();
        for w in breaks.windows(2) {
            acc += self.integrate(&mut f, w[0], w[1]);
        }
        acc
    }

    /// Composite rule on `[a, b]` with panels no wider than `h_max`.
    pub fn integrate_uniform<F: FnMut(T) -> T>(&self, f: F, a: T, b: T, h_max: T) -> T {
        self.integrate_panels(f, &uniform_breaks(a, b, h_max))
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Breakpoints splitting `[a, b]` into equal panels of width at most `h_max`.
pub fn uniform_breaks<T: Real>(a: T, b: T, h_max: T) -> Vec<T> {
    let len = b - a;
    if len <= T::zero() {
        return vec![a, b];
    }
    let count = (len / h_max).ceil().to_usize().unwrap_or(1).max(1);
    let step = len / T::from_usize_lossy(count);
    let mut out: Vec<T> = (0..count).map(|i| a + step * T::from_usize_lossy(i)).collect();
    out.push(b);
    out
}

/// `∫_a^b log|E - x| dE` in closed form (with `0·log 0 = 0`).
pub fn log_primitive<T: Real>(a: T, b: T, x: T) -> T {
    let prim = |u: T| {
        if u == T::zero() {
            T::zero()
        } else {
            u * u.abs().ln() - u
        }
    };
    prim(b - x) - prim(a - x)
}

/// Quadrature configuration used by test functions and the covariance theory:
/// a 32-node Gauss–Legendre rule for smooth panels and a 16-node rule on
/// geometrically graded panels near a logarithmic singularity.
#[derive(Debug, Clone)]
pub struct QuadratureRule<T> {
    smooth: GaussLegendre<T>,
    graded: GaussLegendre<T>,
    ratio: T,
    floor: T,
}

impl<T: Real> QuadratureRule<T> {
    pub fn new(smooth_nodes: usize, graded_nodes: usize) -> Result<Self, QuadratureError> {
        Ok(Self {
            smooth: GaussLegendre::new(smooth_nodes)?,
            graded: GaussLegendre::new(graded_nodes)?,
            ratio: T::lit(0.25),
            floor: T::lit(1e-10),
        })
    }

    pub fn smooth(&self) -> &GaussLegendre<T> {
        &self.smooth
    }

    /// Composite smooth rule on `[a, b]`.
    pub fn integrate<F: FnMut(T) -> T>(&self, f: F, a: T, b: T, h_max: T) -> T {
        self.smooth.integrate_uniform(f, a, b, h_max)
    }

    /// Panels on the segment between `s` and `end`, refined geometrically
    /// toward `s` until the panel touching `s` is narrower than `stop`. Every
    /// panel is at most `h_max` wide; the cheaper graded rule is used only on
    /// panels well below that.
    fn graded_side(&self, s: T, end: T, stop: T, h_max: T, out: &mut Vec<(T, T, bool)>) {
        let len = (end - s).abs();
        if len <= T::zero() {
            return;
        }
        let dir = if end > s { T::one() } else { -T::one() };
        let stop = stop.max(len * self.floor);
        let mut push = |p: T, q: T| {
            let (lo, hi) = if p < q { (p, q) } else { (q, p) };
            let graded = hi - lo <= h_max * T::lit(0.25);
            for w in uniform_breaks(lo, hi, h_max).windows(2) {
                out.push((w[0], w[1], graded));
            }
        };
        let mut outer = len;
        loop {
            if outer <= stop {
                push(s, s + dir * outer);
                break;
            }
            let inner = outer * self.ratio;
            push(s + dir * inner, s + dir * outer);
            outer = inner;
        }
    }

    /// `∫_a^b f` with panels graded geometrically toward the flagged endpoints,
    /// for integrands with integrable endpoint singularities.
    pub fn integrate_graded<F: FnMut(T) -> T>(
        &self,
        mut f: F,
        a: T,
        b: T,
        toward_a: bool,
        toward_b: bool,
        h_max: T,
    ) -> T {
        self.graded_nodes(a, b, toward_a, toward_b, h_max).into_iter().fold(T::zero(), |acc, (x, w)| acc + w * f(x))
    }

    /// Nodes and weights of [`integrate_graded`](Self::integrate_graded).
    pub fn graded_nodes(&self, a: T, b: T, toward_a: bool, toward_b: bool, h_max: T) -> Vec<(T, T)> {
        let mut out = Vec::new();
        if b <= a {
            return out;
        }
        let mut panels = Vec::with_capacity(64);
        match (toward_a, toward_b) {
            (false, false) => {
                for w in uniform_breaks(a, b, h_max).windows(2) {
                    panels.push((w[0], w[1], false));
                }
            }
            (true, false) => self.graded_side(a, b, T::zero(), h_max, &mut panels),
            (false, true) => self.graded_side(b, a, T::zero(), h_max, &mut panels),
            (true, true) => {
                let mid = (a + b) / T::lit(2.0);
                self.graded_side(a, mid, T::zero(), h_max, &mut panels);
                self.graded_side(b, mid, T::zero(), h_max, &mut panels);
            }
        }
        for &(p, q, graded) in &panels {
            let rule = if graded { &self.graded } else { &self.smooth };
            rule.for_each_node(p.min(q), p.max(q), |x, w| out.push((x, w)));
        }
        out
    }

    /// `∫_lo^hi φ(E) log|E - x| dE` for `φ` smooth on `[lo, hi]` with resolution
    /// `h_max`. Near the singularity `φ(s)` is subtracted, `s` being the point of
    /// `[lo, hi]` closest to `x`, and panels are graded geometrically toward `s`.
    pub fn log_convolution<F: Fn(T) -> T>(&self, phi: F, lo: T, hi: T, x: T, h_max: T) -> T {
        if hi <= lo {
            return T::zero();
        }
        let width = hi - lo;
        let s = x.max(lo).min(hi);
        let dist = (x - s).abs();
        if dist >= width {
            return self.integrate(|e| phi(e) * (e - x).abs().ln(), lo, hi, h_max);
        }
        let mut panels = Vec::with_capacity(64);
        self.graded_side(s, lo, dist, h_max, &mut panels);
        self.graded_side(s, hi, dist, h_max, &mut panels);
        let phi_s = phi(s);
        let mut acc = T::zero();
        for &(a, b, graded) in &panels {
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            let rule = if graded { &self.graded } else { &self.smooth };
            acc += rule.integrate(
                |e| {
                    let d = e - x;
                    if d == T::zero() {
                        T::zero()
                    } else {
                        (phi(e) - phi_s) * d.abs().ln()
                    }
                },
                a,
                b,
            );
        }
        acc + phi_s * log_primitive(lo, hi, x)
    }
}

impl QuadratureRule<f64> {
    /// The default 32/16-node configuration.
    pub fn standard() -> Self {
        Self::new(32, 16).expect("standard Gauss-Legendre rules are valid")
    }
}
