//! Battery of exact identities between the closed forms in [`theory`](crate::theory)
//! and independent quadrature routes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::quadrature::QuadratureRule;
use crate::testfn::{Interval, TestFunction};
use crate::theory::*;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentityConfig {
    /// Replaces every per-identity tolerance when set.
    pub tolerance: Option<f64>,
    /// Truncation of the `d_n` and Chebyshev series.
    pub n_max: usize,
    /// Terms in the log- and sine-series partial sums.
    pub series_terms: usize,
    pub interval: (f64, f64),
    pub bump_center: f64,
    pub bump_halfwidth: f64,
    pub s4: f64,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        Self {
            tolerance: None,
            n_max: DEFAULT_N_MAX,
            series_terms: 1_000_000,
            interval: (-1.0, 1.0),
            bump_center: 0.0,
            bump_halfwidth: 0.3,
            s4: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityResult {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub passed: bool,
    pub first_failure: Option<String>,
    pub results: Vec<IdentityResult>,
}

struct Suite {
    override_tol: Option<f64>,
    results: Vec<IdentityResult>,
}

impl Suite {
    fn record(&mut self, name: &str, tolerance: f64, residual: Result<f64, String>) {
        let tolerance = self.override_tol.unwrap_or(tolerance);
        let (residual, error) = match residual {
            Ok(r) => (r, None),
            Err(e) => (f64::INFINITY, Some(e)),
        };
        self.results.push(IdentityResult {
            name: name.to_string(),
            residual,
            tolerance,
            passed: error.is_none() && residual <= tolerance,
            error,
        });
    }
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Runs every identity and reports residuals against their tolerances.
pub fn run_identities(config: &IdentityConfig) -> IdentityReport {
    let mut suite = Suite { override_tol: config.tolerance, results: Vec::new() };
    let rule = QuadratureRule::standard();
    let n_max = config.n_max;
    let s4 = config.s4;

    let point_grid = [-1.0, 0.0, 0.7];
    let log_pt = point_grid.iter().try_fold(0.0f64, |worst, &e| {
        let c = ChebCoeffs::from_fn_with_breaks(|x: f64| (x - e).abs().ln(), 64, &[e], &rule);
        (1..=64).try_fold(worst, |w, k| Ok::<_, TheoryError>(w.max((c.get(k) - c_log_point(e, k)?).abs())))
    });
    suite.record("point_coeff_log", 1e-9, log_pt.map_err(|e| e.to_string()));
    let cnt_pt = point_grid.iter().try_fold(0.0f64, |worst, &e| {
        let c = ChebCoeffs::from_fn_with_breaks(|x: f64| if x <= e { 1.0 } else { 0.0 }, 64, &[e], &rule);
        (1..=64).try_fold(worst, |w, k| Ok::<_, TheoryError>(w.max((c.get(k) - c_cnt_point(e, k)?).abs())))
    });
    suite.record("point_coeff_cnt", 1e-8, cnt_pt.map_err(|e| e.to_string()));

    let terms = config.series_terms;
    suite.record("log_series", 2e-5, Ok((log_series_partial(PI / 3.0, 2.0 * PI / 3.0, terms) - 2f64.ln()).abs()));
    suite.record("sine_series", 2e-5, Ok((sine_series_partial(PI / 2.0, PI / 6.0, terms) - 3f64.sqrt().ln()).abs()));

    let functions = Interval::new(config.interval.0, config.interval.1).map_err(|e| e.to_string()).and_then(|i| {
        let bump = TestFunction::bump_std(i, config.bump_center, config.bump_halfwidth).map_err(|e| e.to_string())?;
        let e1 = TestFunction::dirichlet_std(i, 1).map_err(|e| e.to_string())?;
        Ok((bump, e1))
    });
    let (bump, e1) = match functions {
        Ok(f) => f,
        Err(e) => {
            for name in [
                "v_log_dual_bump",
                "v_log_dual_e1",
                "v_cnt_dual_bump",
                "v_cnt_dual_e1",
                "q_route_log",
                "q_route_cnt",
                "arcsine_identity",
                "cnt_coeff_routes",
            ] {
                suite.record(name, 0.0, Err(e.clone()));
            }
            return finish(suite);
        }
    };

    for (kind, tag) in [(KernelKind::Log, "log"), (KernelKind::Cnt, "cnt")] {
        for (phi, fname) in [(&bump, "bump"), (&e1, "e1")] {
            let residual = KernelSpec::new(kind, s4).map_err(|e| e.to_string()).and_then(|spec| {
                let series = v_series(&spec, phi, phi, n_max).map_err(|e| e.to_string())?.value;
                let quad = v_quadrature(&spec, phi, phi).map_err(|e| e.to_string())?;
                Ok(relative(quad, series))
            });
            suite.record(&format!("v_{tag}_dual_{fname}"), 1e-6, residual);
        }
    }

    let q_log = v_log_series(&bump, &bump, s4, n_max).map_err(|e| e.to_string()).map(|v| {
        let c = ChebCoeffs::from_fn(|x| bump.f_transform(x), n_max, DEFAULT_N_QUAD);
        relative(q_form(&c, s4).value, v.value)
    });
    suite.record("q_route_log", 1e-6, q_log);
    let q_cnt = v_cnt_series(&bump, &bump, s4, n_max).map_err(|e| e.to_string()).map(|v| {
        let c = ChebCoeffs::from_fn(|x| bump.g_transform(x), n_max, DEFAULT_N_QUAD);
        relative(q_form(&c, s4).value, v.value)
    });
    suite.record("q_route_cnt", 1e-6, q_cnt);

    let d = bump.d_coeffs(64);
    let c = ChebCoeffs::from_fn(|x| bump.f_transform(x), 64, DEFAULT_N_QUAD);
    let arcsine = (1..=64).map(|n| (d[n - 1] + n as f64 * c.get(n) / 2.0).abs()).fold(0.0, f64::max);
    suite.record("arcsine_identity", 1e-8, Ok(arcsine));

    let u_route = c_cnt_tests(&e1, 64);
    let routes = (1..=64).map(|k| (u_route.get(k) - c_cnt_test_sine(&e1, k)).abs()).fold(0.0, f64::max);
    suite.record("cnt_coeff_routes", 1e-10, Ok(routes));

    finish(suite)
}

fn finish(suite: Suite) -> IdentityReport {
    let first_failure = suite.results.iter().find(|r| !r.passed).map(|r| r.name.clone());
    IdentityReport { passed: first_failure.is_none(), first_failure, results: suite.results }
}
