//! Monte Carlo and closed-form tools for the log-determinant and eigenvalue
//! counting fields of Wigner matrices.
//!
//! Numerical kernels are generic over [`scalar::Real`]; the aliases below fix
//! them to `f64`, which is what the Monte Carlo pipeline uses.

pub mod ensemble;
pub mod fields;
pub mod identities;
pub mod quadrature;
pub mod scalar;
pub mod special;
pub mod spectra;
pub mod stats;
pub mod sum;
pub mod testfn;
pub mod theory;

pub type Interval = testfn::Interval<f64>;
pub type TestFunction = testfn::TestFunction<f64>;
pub type QuadratureRule = quadrature::QuadratureRule<f64>;
pub type SymMatrix = spectra::SymMatrix<f64>;
pub type Spectrum = spectra::Spectrum<f64>;
pub type ChebCoeffs = theory::ChebCoeffs<f64>;
pub type SeriesValue = theory::SeriesValue<f64>;
pub type LimitFieldSample = theory::LimitFieldSample<f64>;

/// Formats a float with 17 significant digits (round-trip exact for `f64`).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
