//! Sine and cosine integrals.
//!
//! `Si(z) = ∫_0^z sin t / t dt`, `Ci(z) = γ + ln z - Cin(z)` with the entire
//! function `Cin(z) = ∫_0^z (1 - cos t) / t dt`. Power series below
//! `SERIES_CUTOFF`, the continued fraction of `E_1(iz)` above it.

use crate::scalar::Real;

const SERIES_CUTOFF: f64 = 4.0;

fn series<T: Real>(z: T) -> (T, T) {
    // Si = Σ_{n≥0} (-1)^n z^{2n+1} / ((2n+1)(2n+1)!)
    // Cin = Σ_{n≥1} (-1)^{n+1} z^{2n} / ((2n)(2n)!)
    let eps = T::epsilon() * T::lit(0.25);
    let mut si = z;
    let mut cin = T::zero();
    let mut power = z; // z^m / m!, m = 1
    let mut sign = T::one();
    for n in 1..100usize {
        let even = T::from_usize_lossy(2 * n);
        let odd = T::from_usize_lossy(2 * n + 1);
        power = power * z / even;
        let c = sign * power / even;
        cin += c;
        power = power * z / odd;
        let s = -sign * power / odd;
        si += s;
        sign = -sign;
        if c.abs() <= eps * cin.abs() && s.abs() <= eps * si.abs() {
            break;
        }
    }
    (si, cin)
}

/// `(Si(z), Ci(z))` for `z > SERIES_CUTOFF` via Lentz's continued fraction.
fn continued_fraction<T: Real>(z: T) -> (T, T) {
    let eps = T::epsilon();
    let tiny = T::min_positive_value().sqrt();
    // complex helpers on (re, im)
    let mul = |a: (T, T), b: (T, T)| (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0);
    let inv = |a: (T, T)| {
        let d = a.0 * a.0 + a.1 * a.1;
        (a.0 / d, -a.1 / d)
    };
    let mut b = (T::one(), z);
    let mut c = (T::one() / tiny, T::zero());
    let mut d = inv(b);
    let mut h = d;
    for i in 2..10_000usize {
        let a = -T::from_usize_lossy((i - 1) * (i - 1));
        b.0 += T::lit(2.0);
        d = inv((a * d.0 + b.0, a * d.1 + b.1));
        let ac = mul((a, T::zero()), inv(c));
        c = (b.0 + ac.0, b.1 + ac.1);
        let del = mul(c, d);
        h = mul(h, del);
        if (del.0 - T::one()).abs() + del.1.abs() < eps {
            break;
        }
    }
    h = mul((z.cos(), -z.sin()), h);
    (T::FRAC_PI_2() + h.1, -h.0)
}

/// `Si(z)` for real `z`.
pub fn si<T: Real>(z: T) -> T {
    let a = z.abs();
    let v = if a <= T::lit(SERIES_CUTOFF) { series(a).0 } else { continued_fraction(a).0 };
    if z < T::zero() {
        -v
    } else {
        v
    }
}

/// `Cin(z) = γ + ln|z| - Ci(|z|)`, even and entire.
pub fn cin<T: Real>(z: T) -> T {
    let a = z.abs();
    if a <= T::lit(SERIES_CUTOFF) {
        series(a).1
    } else {
        T::euler_gamma() + a.ln() - continued_fraction(a).1
    }
}

/// `Ci(z)` for `z > 0`.
pub fn ci<T: Real>(z: T) -> T {
    debug_assert!(z > T::zero());
    if z <= T::lit(SERIES_CUTOFF) {
        T::euler_gamma() + z.ln() - series(z).1
    } else {
        continued_fraction(z).1
    }
}

/// `ln u - cos(κu)·Ci(κu)` for `u ≥ 0`, `κ > 0`, continuous at `u = 0` where it
/// equals `-(γ + ln κ)`.
pub fn log_minus_cos_ci<T: Real>(u: T, kappa: T) -> T {
    let z = kappa * u;
    let cz = z.cos();
    if z <= T::lit(SERIES_CUTOFF) {
        let log_part = if u == T::zero() { T::zero() } else { u.ln() * (T::one() - cz) };
        log_part - cz * (T::euler_gamma() + kappa.ln() - series(z).1)
    } else {
        u.ln() - cz * continued_fraction(z).1
    }
}
