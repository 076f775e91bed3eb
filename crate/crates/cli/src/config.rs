//! Experiment configuration: one JSON document per run.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use logdet_lab::ensemble::{validate_assumption, EnsembleSpec, EntryDistribution, Family};
use logdet_lab::fields::Field;
use logdet_lab::testfn::{FunctionSpec, Interval, TestFunction};
use logdet_lab::QuadratureRule;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Off-diagonal entry law.
    pub ensemble: Family,
    /// Explicit diagonal law (variance 2); derived from `ensemble` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diag: Option<Family>,
    pub n: usize,
    #[serde(default = "default_interval")]
    pub interval: (f64, f64),
    #[serde(default)]
    pub functions: Vec<FunctionSpec>,
    /// Appends the Dirichlet modes `e_1 … e_modes` to `functions`.
    #[serde(default)]
    pub modes: usize,
    #[serde(default = "default_fields")]
    pub fields: Vec<Field>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub options: Options,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Options {
    /// Sobolev exponent.
    pub r: f64,
    pub k_max: usize,
    /// Truncation of the `d_n` series.
    pub n_max: usize,
    pub k_range: (usize, usize),
    /// Overrides every identity tolerance.
    pub tolerance: Option<f64>,
    pub series_terms: usize,
    /// Matrix sizes for the Sobolev study; defaults to `[n]`.
    pub sizes: Vec<usize>,
    /// Fourth cumulants for the synthesizer; defaults to the ensemble's.
    pub s4_values: Vec<f64>,
    /// Limit-field draws; defaults to `replicas`.
    pub synth_replicas: Option<usize>,
    pub grid_points: usize,
    pub synthetic: Option<SyntheticScan>,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            r: 0.5,
            k_max: 64,
            n_max: 512,
            k_range: (2, 32),
            tolerance: None,
            series_terms: 1_000_000,
            sizes: Vec::new(),
            s4_values: Vec::new(),
            synth_replicas: None,
            grid_points: 33,
            synthetic: None,
        }
    }
}

/// Table with `Var⟨X, e_k⟩ ∝ k^exponent` exactly, for calibrating the scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticScan {
    pub exponent: f64,
    pub replicas: usize,
}

fn default_interval() -> (f64, f64) {
    (-1.0, 1.0)
}

fn default_fields() -> Vec<Field> {
    vec![Field::Log, Field::Cnt]
}

fn default_replicas() -> usize {
    1000
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn function_specs(&self) -> Vec<FunctionSpec> {
        let mut out = self.functions.clone();
        out.extend((1..=self.modes).map(|k| FunctionSpec::Dirichlet { k }));
        out
    }

    pub fn ensemble_spec(&self, n: usize) -> Result<EnsembleSpec, CliError> {
        let spec = EnsembleSpec::new(n, self.ensemble).map_err(|e| CliError::Config(e.to_string()))?;
        let spec = match self.diag {
            None => spec,
            Some(d) => {
                let diag = EntryDistribution::new(d, 2.0).map_err(|e| CliError::Config(e.to_string()))?;
                EnsembleSpec::with_laws(n, spec.offdiag, diag)
            }
        };
        let report = validate_assumption(&spec);
        if !report.passed {
            return Err(CliError::Config(format!(
                "ensemble violates the moment assumption: {}",
                report.failures.join("; ")
            )));
        }
        Ok(spec)
    }

    pub fn interval(&self) -> Result<Interval<f64>, CliError> {
        Interval::new(self.interval.0, self.interval.1).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn test_functions(&self) -> Result<Vec<TestFunction<f64>>, CliError> {
        let interval = self.interval()?;
        let rule = Arc::new(QuadratureRule::standard());
        self.function_specs()
            .iter()
            .map(|s| {
                TestFunction::from_spec(s, interval, rule.clone())
                    .map_err(|e| CliError::Config(format!("{}: {e}", s.label())))
            })
            .collect()
    }

    /// Checks everything a Monte Carlo subcommand relies on.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.n == 0 {
            return Err(CliError::Config("n must be positive".into()));
        }
        if self.replicas < 2 {
            return Err(CliError::Config(format!("replicas = {} (need at least 2)", self.replicas)));
        }
        if self.fields.is_empty() {
            return Err(CliError::Config("no fields selected".into()));
        }
        self.ensemble_spec(self.n)?;
        self.test_functions()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = ExperimentConfig::from_json(r#"{"ensemble": {"family": "gaussian"}, "n": 64}"#).unwrap();
        assert_eq!(c.interval, (-1.0, 1.0));
        assert_eq!(c.options.k_range, (2, 32));
        assert_eq!(c.fields, vec![Field::Log, Field::Cnt]);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_ensembles() {
        assert!(ExperimentConfig::from_json(r#"{"ensemble": {"family": "gaussian"}, "n": 4, "typo": 1}"#).is_err());
        let c = ExperimentConfig::from_json(
            r#"{"ensemble": {"family": "rademacher_gauss", "a": 0.8, "sigma": 0.6}, "diag": {"family": "gaussian"}, "n": 8}"#,
        )
        .unwrap();
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
        let c = ExperimentConfig::from_json(r#"{"ensemble": {"family": "gaussian"}, "n": 8, "interval": [-2.5, 1.0]}"#)
            .unwrap();
        assert!(c.validate().is_err());
    }
}
