//! Versioned key-value text checkpoint of a calibration run.
//!
//! ```text
//! # airtraffic calibration checkpoint
//! format = airtraffic-calibration
//! version = 1
//! lambda = 0.99
//! ...
//! theta.co = 0.712...
//! cov.0.0 = 1.3e-5
//! params.wind_kappa = 0.15
//! baseline.n1.co = 0.51
//! ```
//!
//! Floats are written in shortest round-trip decimal form, so reading a
//! checkpoint back reproduces every value bit for bit. Keys are
//! `<section>.<name>`; a node id may contain dots but not `=`. `theta.*` is the
//! unconstrained recursive estimate, from which the weights are derived.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::CalibState;
use crate::estimator::EnvCorrectionParams;
use crate::preprocess::BaselineVector;
use crate::types::{GasSpecies, GasVector};

pub const FORMAT: &str = "airtraffic-calibration";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing key `{0}`")]
    Missing(String),
    #[error("unsupported checkpoint version {0}")]
    Version(String),
    #[error("invalid checkpoint: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: CalibState<f64>,
    pub params: EnvCorrectionParams<f64>,
    pub baselines: BTreeMap<String, BaselineVector<f64>>,
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let st = &self.state;
        let _ = writeln!(s, "# airtraffic calibration checkpoint");
        let _ = writeln!(s, "format = {FORMAT}");
        let _ = writeln!(s, "version = {VERSION}");
        let _ = writeln!(s, "lambda = {:?}", st.lambda);
        let _ = writeln!(s, "delta = {:?}", st.delta);
        let _ = writeln!(s, "n_updates = {}", st.n_updates);
        let _ = writeln!(s, "clamp_events = {}", st.clamp_events);
        let _ = writeln!(s, "breakdowns = {}", st.breakdowns);
        for (g, t) in GasVector::new(st.theta).iter() {
            let _ = writeln!(s, "theta.{} = {t:?}", g.key());
        }
        for (i, row) in st.cov.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let _ = writeln!(s, "cov.{i}.{j} = {v:?}");
            }
        }
        let p = &self.params;
        let _ = writeln!(s, "params.co_theta_lo = {:?}", p.co_theta_lo);
        let _ = writeln!(s, "params.co_theta_hi = {:?}", p.co_theta_hi);
        let _ = writeln!(s, "params.co_floor = {:?}", p.co_floor);
        let _ = writeln!(s, "params.hc_rh_slope = {:?}", p.hc_rh_slope);
        let _ = writeln!(s, "params.wind_kappa = {:?}", p.wind_kappa);
        for (node, b) in &self.baselines {
            for (g, v) in b.0.iter() {
                let _ = writeln!(s, "baseline.{node}.{} = {v:?}", g.key());
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, CheckpointError> {
        let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .rsplit_once('=')
                .ok_or_else(|| CheckpointError::Parse { line: i + 1, msg: "expected `key = value`".into() })?;
            if kv.insert(k.trim(), v.trim()).is_some() {
                return Err(CheckpointError::Parse { line: i + 1, msg: format!("duplicate key `{}`", k.trim()) });
            }
        }
        let get = |k: &str| kv.get(k).copied().ok_or_else(|| CheckpointError::Missing(k.to_string()));
        let num = |k: &str| -> Result<f64, CheckpointError> {
            get(k)?.parse().map_err(|_| CheckpointError::Invalid(format!("`{k}` is not a number")))
        };
        let int = |k: &str| -> Result<u64, CheckpointError> {
            get(k)?.parse().map_err(|_| CheckpointError::Invalid(format!("`{k}` is not an integer")))
        };

        if get("format")? != FORMAT {
            return Err(CheckpointError::Invalid(format!("format is not {FORMAT}")));
        }
        let version = get("version")?;
        if version != VERSION.to_string() {
            return Err(CheckpointError::Version(version.to_string()));
        }

        let theta = GasVector::new(GasSpecies::ALL.map(|g| num(&format!("theta.{}", g.key()))).into_iter().collect::<Result<Vec<_>, _>>()?.try_into().expect("four weights"));
        let mut cov = [[0.0; 4]; 4];
        for (i, row) in cov.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = num(&format!("cov.{i}.{j}"))?;
            }
        }
        let state = CalibState::from_parts(
            theta,
            cov,
            num("lambda")?,
            num("delta")?,
            (int("n_updates")?, int("clamp_events")?, int("breakdowns")?),
        )
        .map_err(|e| CheckpointError::Invalid(e.to_string()))?;

        let params = EnvCorrectionParams {
            co_theta_lo: num("params.co_theta_lo")?,
            co_theta_hi: num("params.co_theta_hi")?,
            co_floor: num("params.co_floor")?,
            hc_rh_slope: num("params.hc_rh_slope")?,
            wind_kappa: num("params.wind_kappa")?,
        };
        params.validate().map_err(|e| CheckpointError::Invalid(e.to_string()))?;

        let mut partial: BTreeMap<String, BTreeMap<GasSpecies, f64>> = BTreeMap::new();
        for (k, _) in kv.range("baseline."..) {
            let Some(rest) = k.strip_prefix("baseline.") else { break };
            let (node, gas) = rest
                .rsplit_once('.')
                .ok_or_else(|| CheckpointError::Invalid(format!("malformed baseline key `{k}`")))?;
            let g = GasSpecies::ALL
                .into_iter()
                .find(|g| g.key() == gas)
                .ok_or_else(|| CheckpointError::Invalid(format!("unknown gas in `{k}`")))?;
            partial.entry(node.to_string()).or_default().insert(g, num(k)?);
        }
        let baselines = partial
            .into_iter()
            .map(|(node, m)| {
                GasVector::from_map(&m)
                    .map(|g| (node.clone(), BaselineVector(g)))
                    .map_err(|e| CheckpointError::Invalid(format!("baseline for node {node}: {e}")))
            })
            .collect::<Result<_, _>>()?;
        Ok(Checkpoint { state, params, baselines })
    }
}
