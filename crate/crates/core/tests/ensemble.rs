use logdet_lab::ensemble::{sample_matrix, validate_assumption, EnsembleSpec, EntryDistribution, Family, RngStream};
use proptest::prelude::*;

fn families() -> Vec<Family> {
    vec![
        Family::Gaussian,
        Family::RademacherGauss { a: 0.8, sigma: 0.6 },
        Family::RademacherGauss { a: 2.0, sigma: 0.3 },
        Family::ScaleMixture { p: 0.5, sigma1: 0.5f64.sqrt(), sigma2: 1.5f64.sqrt() },
        Family::ScaleMixture { p: 0.1, sigma1: 3.0, sigma2: 0.4 },
    ]
}

/// Sample variance and skewness with their plug-in standard errors.
fn moment_check(xs: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let var_se = ((m4 - m2 * m2) / n).sqrt();
    let sd = m2.sqrt();
    let z: Vec<f64> = xs.iter().map(|x| (x - mean) / sd).collect();
    let skew = z.iter().map(|v| v.powi(3)).sum::<f64>() / n;
    let skew_se = ((z.iter().map(|v| v.powi(6)).sum::<f64>() / n - skew * skew) / n).sqrt();
    (m2 * n / (n - 1.0), var_se, skew, skew_se)
}

#[test]
fn monte_carlo_variance_and_symmetry() {
    for (i, fam) in families().into_iter().enumerate() {
        for target in [1.0, 2.0] {
            let d = EntryDistribution::new(fam, target).unwrap();
            let mut rng = RngStream::new(2024, i as u64).rng();
            let xs: Vec<f64> = (0..100_000).map(|_| d.sample(&mut rng)).collect();
            let (var, var_se, skew, skew_se) = moment_check(&xs);
            assert!((var - d.variance()).abs() <= 5.0 * var_se, "{fam:?}: var {var} vs {}", d.variance());
            assert!(skew.abs() <= 5.0 * skew_se, "{fam:?}: skewness {skew} (se {skew_se})");
        }
    }
}

#[test]
fn diagonal_entry_variance_at_n512() {
    let spec = EnsembleSpec::goe(512).unwrap();
    let xs: Vec<f64> =
        (0..10_000u64).map(|r| sample_matrix(&spec, RngStream::new(5, r)).get(0, 0) * (512f64).sqrt()).collect();
    let (var, se, _, _) = moment_check(&xs);
    assert!((var - 2.0).abs() <= 5.0 * se, "var {var} se {se}");
}

#[test]
fn sampling_is_reproducible_per_replica() {
    let spec = EnsembleSpec::new(32, Family::ScaleMixture { p: 0.3, sigma1: 1.2, sigma2: 0.8 }).unwrap();
    let a = sample_matrix(&spec, RngStream::new(1, 17));
    let b = sample_matrix(&spec, RngStream::new(1, 17));
    assert_eq!(a.as_slice(), b.as_slice());
    assert!(a.is_symmetric());
}

proptest! {
    #[test]
    fn rademacher_gauss_fourth_cumulant(a in 0.05f64..3.0, sigma in 0.05f64..3.0) {
        // E X⁴ = a⁴ + 6a²σ² + 3σ⁴ and E X² = a² + σ²
        let v = a * a + sigma * sigma;
        let m4 = a.powi(4) + 6.0 * a * a * sigma * sigma + 3.0 * sigma.powi(4);
        let expected = m4 - 3.0 * v * v;
        prop_assert!((expected + 2.0 * a.powi(4)).abs() < 1e-12 * (1.0 + a.powi(4)));
        let d = EntryDistribution::new(Family::RademacherGauss { a, sigma }, v).unwrap();
        prop_assert!((d.fourth_cumulant() - expected).abs() < 1e-11 * (1.0 + expected.abs()));
        // Jensen margin at unit variance
        let unit = EntryDistribution::new(Family::RademacherGauss { a, sigma }, 1.0).unwrap();
        prop_assert!(unit.fourth_cumulant() > -2.0);
    }

    #[test]
    fn scale_mixture_fourth_cumulant(p in 0.01f64..0.99, s1 in 0.05f64..3.0, s2 in 0.05f64..3.0) {
        let v = p * s1 * s1 + (1.0 - p) * s2 * s2;
        let m4 = 3.0 * (p * s1.powi(4) + (1.0 - p) * s2.powi(4));
        let expected = m4 - 3.0 * v * v;
        let d = EntryDistribution::new(Family::ScaleMixture { p, sigma1: s1, sigma2: s2 }, v).unwrap();
        prop_assert!(expected >= -1e-12);
        prop_assert!((d.fourth_cumulant() - expected).abs() < 1e-11 * (1.0 + expected.abs()));
        prop_assert!((d.variance() - v).abs() < 1e-12 * v);
    }

    #[test]
    fn derived_diagonal_passes_assumption(a in 0.05f64..0.8, sigma in 0.5f64..2.0, p in 0.2f64..0.8, d in -0.5f64..0.5) {
        let rg = Family::RademacherGauss { a, sigma };
        if let Ok(spec) = EnsembleSpec::new(4, rg) {
            prop_assert!(validate_assumption(&spec).passed);
        }
        let sm = Family::ScaleMixture { p, sigma1: (1.0 + d).sqrt(), sigma2: (1.0 - d * p / (1.0 - p)).abs().sqrt() };
        if let Ok(spec) = EnsembleSpec::new(4, sm) {
            let report = validate_assumption(&spec);
            prop_assert!(report.passed, "{:?}", report.failures);
            prop_assert!((spec.diag.fourth_cumulant() - 8.0 * spec.s4()).abs() < 1e-12);
        }
    }
}
