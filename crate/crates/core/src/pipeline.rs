//! End-to-end processing: quality control, per-minute series, baselines,
//! online calibration against counted traffic, estimation and evaluation.

use std::collections::BTreeMap;
use std::ops::Range;

use thiserror::Error;

use crate::calibration::checkpoint::Checkpoint;
use crate::calibration::{batch_fit, evaluate, features, CalibError, CalibState, FitReport};
use crate::config::{BaselineConfig, Config};
use crate::estimator::{EnvCorrectionParams, EstimateError, EstimatorModel, TrafficEstimate};
use crate::preprocess::{
    baseline_estimate, impute_gaps, minute_aggregate, qc_filter, BaselineVector, MinuteSeries, PreprocessError, QcConfig,
    RejectReason,
};
use crate::types::{EnvConditions, GasVector, GroundTruthCount, SensorRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("EMPTY_INPUT: no usable records")]
    EmptyInput,
    #[error("split must lie strictly between 0 and 1, got {0}")]
    InvalidSplit(f64),
    #[error("{0}")]
    Preprocess(#[from] PreprocessError),
    #[error("{0}")]
    Calibration(#[from] CalibError),
    #[error("{0}")]
    Estimate(#[from] EstimateError),
}

/// Quality-controlled, gap-filled per-minute series of every node.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub series: BTreeMap<String, MinuteSeries<f64>>,
    pub rejected: Vec<(SensorRecord<f64>, RejectReason)>,
    pub n_records: usize,
}

impl Prepared {
    /// Half-open minute range covered by any node.
    pub fn minute_range(&self) -> Option<Range<i64>> {
        let start = self.series.values().map(|s| s.first_minute).min()?;
        let end = self.series.values().map(|s| s.first_minute + s.slots.len() as i64).max()?;
        Some(start..end)
    }

    /// Readings of every node that has data at `minute`, in node-id order.
    pub fn readings(&self, minute: i64) -> Vec<(&str, &GasVector<f64>, &EnvConditions<f64>)> {
        self.series
            .iter()
            .filter_map(|(id, s)| s.get(minute).map(|(g, e)| (id.as_str(), g, e)))
            .collect()
    }
}

pub fn prepare(records: &[SensorRecord<f64>], qc: &QcConfig<f64>) -> Prepared {
    let outcome = qc_filter(records, qc);
    let samples = minute_aggregate(&outcome.clean);
    let mut per_node: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for s in samples {
        per_node.entry(s.node_id.clone()).or_default().push(s);
    }
    let series = per_node.into_iter().map(|(id, ss)| (id, impute_gaps(&ss, qc.max_gap))).collect();
    Prepared { series, rejected: outcome.rejected, n_records: records.len() }
}

/// Baseline of each node from its minutes inside `range`.
pub fn estimate_baselines(
    prepared: &Prepared,
    range: Range<i64>,
    cfg: &BaselineConfig,
) -> Result<BTreeMap<String, BaselineVector<f64>>, PipelineError> {
    let mut out = BTreeMap::new();
    for (id, s) in &prepared.series {
        let present: Vec<_> = s.present().into_iter().filter(|(m, _)| range.contains(m)).collect();
        if present.is_empty() {
            continue;
        }
        let b = match cfg.fixed {
            Some(fixed) => BaselineVector(fixed),
            None => baseline_estimate(&present, cfg.window_minutes, cfg.quantile)?,
        };
        out.insert(id.clone(), b);
    }
    if out.is_empty() {
        return Err(PipelineError::EmptyInput);
    }
    Ok(out)
}

/// Training pairs `(features, truth)` for minutes in `range`, minute-major
/// and node-id order within a minute. Each node is regressed on the full
/// segment count.
pub fn training_pairs(
    prepared: &Prepared,
    truth: &BTreeMap<i64, f64>,
    range: Range<i64>,
    baselines: &BTreeMap<String, BaselineVector<f64>>,
    params: &EnvCorrectionParams<f64>,
) -> Vec<(GasVector<f64>, f64)> {
    let mut pairs = Vec::new();
    for (&minute, &y) in truth.range(range) {
        for (node, gases, env) in prepared.readings(minute) {
            if let Some(b) = baselines.get(node) {
                pairs.push((features(gases, env, b, params), y));
            }
        }
    }
    pairs
}

/// Feeds `pairs` through the online estimator. Covariance breakdowns reset
/// the covariance and are counted in the state; they do not stop the run.
pub fn calibrate(state: &mut CalibState<f64>, pairs: &[(GasVector<f64>, f64)]) {
    for (x, y) in pairs {
        if let Err(e) = state.update(x, *y) {
            log::debug!("calibration update: {e}");
        }
    }
}

/// Estimates every minute in `range` that has enough nodes.
pub fn estimate(prepared: &Prepared, range: Range<i64>, model: &EstimatorModel<f64>) -> Vec<TrafficEstimate<f64>> {
    range
        .filter_map(|minute| model.estimate_minute(minute, prepared.readings(minute)).ok())
        .collect()
}

pub fn truth_map(truth: &[GroundTruthCount<f64>]) -> BTreeMap<i64, f64> {
    truth.iter().map(|t| (t.minute, t.vehicles_per_min)).collect()
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub checkpoint: Checkpoint,
    pub train: Range<i64>,
    pub holdout: Range<i64>,
    pub estimates: Vec<TrafficEstimate<f64>>,
    pub report: FitReport<f64>,
    pub n_rejected: usize,
    pub n_train_pairs: usize,
}

/// Calibrates on the first `split` fraction of minutes, freezes the weights
/// and estimates and scores the rest.
pub fn run_pipeline(
    records: &[SensorRecord<f64>],
    truth: &[GroundTruthCount<f64>],
    cfg: &Config,
    split: f64,
) -> Result<PipelineOutput, PipelineError> {
    if !(split > 0.0 && split < 1.0) {
        return Err(PipelineError::InvalidSplit(split));
    }
    let prepared = prepare(records, &cfg.qc);
    let range = prepared.minute_range().ok_or(PipelineError::EmptyInput)?;
    // The tolerance keeps fractions like 3/7 of a whole number of days on the
    // day boundary despite rounding.
    let cut = range.start + ((range.end - range.start) as f64 * split + 1e-6).floor() as i64;
    let (train, holdout) = (range.start..cut, cut..range.end);

    let params = cfg.estimator.params;
    let baselines = estimate_baselines(&prepared, train.clone(), &cfg.baseline)?;
    let truth = truth_map(truth);
    let pairs = training_pairs(&prepared, &truth, train.clone(), &baselines, &params);
    // Surfaces RANK_DEFICIENT before the online fit quietly settles on
    // arbitrary weights.
    batch_fit(&pairs)?;
    let mut state = CalibState::new(cfg.calibration.lambda, cfg.calibration.delta)?;
    calibrate(&mut state, &pairs);

    let model = EstimatorModel {
        weights: state.weights(),
        baselines: baselines.clone(),
        params,
        capacity_veh_per_min: cfg.scenario.capacity_veh_per_min,
        min_nodes: cfg.estimator.min_nodes,
    };
    let estimates = estimate(&prepared, holdout.clone(), &model);
    let pred: BTreeMap<i64, f64> = estimates.iter().map(|e| (e.minute, e.vehicles_per_min)).collect();
    let report = evaluate(&pred, &truth)?;
    Ok(PipelineOutput {
        checkpoint: Checkpoint { state, params, baselines },
        train,
        holdout,
        estimates,
        report,
        n_rejected: prepared.rejected.len(),
        n_train_pairs: pairs.len(),
    })
}
