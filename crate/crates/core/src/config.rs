//! Run configuration: one TOML file with a table per stage.
//!
//! ```toml
//! [scenario]
//! duration_days = 7
//! rng_seed = 42
//!
//! [qc]
//! stuck_run_len = 10
//!
//! [estimator]
//! min_nodes = 1
//! [estimator.params]
//! wind_kappa = 0.15
//!
//! [calibration]
//! lambda = 0.999
//!
//! [baseline]
//! window_minutes = 1440
//! quantile = 0.05
//! ```
//!
//! Every table and key is optional; missing values take their defaults.
//! Unknown keys are errors.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::estimator::EnvCorrectionParams;
use crate::preprocess::QcConfig;
use crate::simulator::ScenarioConfig;
use crate::types::GasVector;

/// A configuration problem, tied to the dotted key that caused it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { key: key.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "CONFIG_INVALID: {}", self.message)
        } else {
            write!(f, "CONFIG_INVALID: `{}`: {}", self.key, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub params: EnvCorrectionParams<f64>,
    pub min_nodes: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { params: EnvCorrectionParams::default(), min_nodes: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub lambda: f64,
    pub delta: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig { lambda: 0.99, delta: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub window_minutes: u32,
    pub quantile: f64,
    /// Known background (e.g. from a reference station). When set it
    /// replaces the rolling quantile for every node.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed: Option<GasVector<f64>>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig { window_minutes: 1440, quantile: 0.05, fixed: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub scenario: ScenarioConfig,
    pub qc: QcConfig<f64>,
    pub estimator: EstimatorConfig,
    pub calibration: CalibrationConfig,
    pub baseline: BaselineConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            ConfigError::new(offending_key(text, &e, &message), message)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scenario.validate()?;
        self.qc.validate().map_err(|e| ConfigError::new("qc", e.to_string()))?;
        self.estimator.params.validate().map_err(|e| ConfigError::new("estimator.params", e.to_string()))?;
        if self.estimator.min_nodes == 0 {
            return Err(ConfigError::new("estimator.min_nodes", "must be at least 1"));
        }
        let c = &self.calibration;
        if !(c.lambda > 0.0 && c.lambda <= 1.0) {
            return Err(ConfigError::new("calibration.lambda", format!("must lie in (0, 1], got {}", c.lambda)));
        }
        if !(c.delta > 0.0 && c.delta.is_finite()) {
            return Err(ConfigError::new("calibration.delta", format!("must be positive, got {}", c.delta)));
        }
        if self.baseline.window_minutes < 60 {
            return Err(ConfigError::new("baseline.window_minutes", "must be at least 60"));
        }
        if !(self.baseline.quantile > 0.0 && self.baseline.quantile < 0.5) {
            return Err(ConfigError::new("baseline.quantile", "must lie in (0, 0.5)"));
        }
        if let Some(b) = &self.baseline.fixed {
            if b.iter().any(|(_, v)| !(v >= 0.0 && v.is_finite())) {
                return Err(ConfigError::new("baseline.fixed", "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// Dotted path of the key a TOML error points at: the unknown field name if
/// the message has one, prefixed with the enclosing `[table]` header.
fn offending_key(text: &str, err: &toml::de::Error, message: &str) -> String {
    let Some(span) = err.span() else { return String::new() };
    let before = &text[..span.start.min(text.len())];
    let table = before
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('[') && l.ends_with(']'))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    let field = message
        .strip_prefix("unknown field `")
        .and_then(|rest| rest.split('`').next())
        .map(str::to_string)
        .or_else(|| {
            let raw = text[span.start.min(text.len())..span.end.min(text.len())].trim();
            let key = raw.split('=').next().unwrap_or(raw).trim();
            (!key.is_empty() && !key.starts_with('[') && !key.contains('\n')).then(|| key.to_string())
        });
    match (table, field) {
        (Some(t), Some(f)) if !f.starts_with(&format!("{t}.")) && f != t => format!("{t}.{f}"),
        (Some(t), None) => t,
        (_, Some(f)) => f,
        (None, None) => String::new(),
    }
}
