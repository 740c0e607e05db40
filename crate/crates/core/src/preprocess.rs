//! Data cleaning ahead of estimation: rule-based quality control, per-minute
//! aggregation, short-gap interpolation and ambient baseline estimation.
//!
//! QC applies three rules per node and per gas channel:
//!
//! * plausible range check,
//! * stuck sensor: a run of identical values spanning more than
//!   `stuck_run_len` minutes,
//! * spike: deviation from the centred rolling median above
//!   `spike_factor` times the scaled median absolute deviation.
//!
//! The rules are re-applied to the surviving records until nothing more is
//! rejected, so the clean output is a fixpoint and filtering it again rejects
//! nothing.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{validate_record, EnvConditions, GasSpecies, GasVector, NodeSample, SensorRecord, Violation};
use crate::Scalar;

/// Consistency constant turning a MAD into a Gaussian standard deviation.
const MAD_TO_SIGMA: f64 = 1.4826;
const MIN_SPIKE_WINDOW: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("EMPTY_SERIES: no samples to estimate a baseline from")]
    EmptySeries,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct QcConfig<T: Scalar> {
    /// Plausible `(min, max)` per gas, native units.
    pub ranges: GasVector<(T, T)>,
    /// Minutes of identical readings tolerated before a run is rejected.
    pub stuck_run_len: u32,
    /// Longest run of missing minutes filled by interpolation.
    pub max_gap: u32,
    /// Rejection threshold in robust standard deviations.
    pub spike_factor: T,
    /// Half width, in samples, of the centred rolling window of the spike test.
    pub spike_half_window: usize,
    /// Lower bound on the spike scale relative to the rolling median, so
    /// flat stretches do not turn tiny wiggles into spikes.
    pub spike_rel_floor: T,
}

impl<T: Scalar> Default for QcConfig<T> {
    fn default() -> Self {
        let r = |hi: f64| (T::zero(), T::lit(hi));
        QcConfig {
            ranges: GasVector::new([r(100.0), r(10.0), r(50.0), r(10.0)]),
            stuck_run_len: 10,
            max_gap: 3,
            spike_factor: T::lit(8.0),
            spike_half_window: 7,
            spike_rel_floor: T::lit(0.01),
        }
    }
}

impl<T: Scalar> QcConfig<T> {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        for (g, (lo, hi)) in self.ranges.iter() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(PreprocessError::InvalidParameter(format!("qc.ranges.{}: min must be below max", g.key())));
            }
        }
        if self.stuck_run_len < 2 {
            return Err(PreprocessError::InvalidParameter("qc.stuck_run_len must be >= 2".into()));
        }
        if !(self.spike_factor > T::zero()) {
            return Err(PreprocessError::InvalidParameter("qc.spike_factor must be positive".into()));
        }
        if self.spike_rel_floor < T::zero() {
            return Err(PreprocessError::InvalidParameter("qc.spike_rel_floor must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RejectReason {
    Invalid(Vec<Violation>),
    OutOfRange(GasSpecies),
    Spike(GasSpecies),
    StuckSensor(GasSpecies),
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::Invalid(_) => "INVALID",
            RejectReason::OutOfRange(_) => "OUT_OF_RANGE",
            RejectReason::Spike(_) => "SPIKE",
            RejectReason::StuckSensor(_) => "STUCK_SENSOR",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::Invalid(v) => {
                let codes: Vec<String> = v.iter().map(ToString::to_string).collect();
                write!(f, "INVALID [{}]", codes.join(", "))
            }
            RejectReason::OutOfRange(g) | RejectReason::Spike(g) | RejectReason::StuckSensor(g) => {
                write!(f, "{} ({g})", self.code())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcOutcome<T> {
    pub clean: Vec<SensorRecord<T>>,
    pub rejected: Vec<(SensorRecord<T>, RejectReason)>,
}

/// Splits `records` into clean and rejected records; every input record ends
/// up in exactly one of the two, each in input order.
pub fn qc_filter<T: Scalar>(records: &[SensorRecord<T>], cfg: &QcConfig<T>) -> QcOutcome<T> {
    let mut by_node: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_node.entry(r.node_id.as_str()).or_default().push(i);
    }

    let mut reasons: Vec<Option<RejectReason>> = vec![None; records.len()];
    for indices in by_node.values() {
        let mut alive = Vec::with_capacity(indices.len());
        for &i in indices {
            match pointwise_reason(&records[i], cfg) {
                Some(reason) => reasons[i] = Some(reason),
                None => alive.push(i),
            }
        }
        loop {
            let flagged = detect_stuck(records, &alive, cfg);
            let flagged = if flagged.is_empty() { detect_spikes(records, &alive, cfg) } else { flagged };
            if flagged.is_empty() {
                break;
            }
            for (pos, reason) in flagged.into_iter().rev() {
                reasons[alive[pos]] = Some(reason);
                alive.remove(pos);
            }
        }
    }

    let mut out = QcOutcome { clean: Vec::new(), rejected: Vec::new() };
    for (r, reason) in records.iter().zip(reasons) {
        match reason {
            Some(reason) => out.rejected.push((r.clone(), reason)),
            None => out.clean.push(r.clone()),
        }
    }
    out
}

fn pointwise_reason<T: Scalar>(r: &SensorRecord<T>, cfg: &QcConfig<T>) -> Option<RejectReason> {
    let violations = validate_record(r);
    if !violations.is_empty() {
        return Some(RejectReason::Invalid(violations));
    }
    r.gases.iter().find_map(|(g, c)| {
        let (lo, hi) = cfg.ranges.get(g);
        (c < lo || c > hi).then_some(RejectReason::OutOfRange(g))
    })
}

/// Positions in `alive` (ascending, deduplicated) flagged as stuck.
fn detect_stuck<T: Scalar>(records: &[SensorRecord<T>], alive: &[usize], cfg: &QcConfig<T>) -> Vec<(usize, RejectReason)> {
    let mut flags: BTreeMap<usize, RejectReason> = BTreeMap::new();
    for g in GasSpecies::ALL {
        let mut start = 0;
        while start < alive.len() {
            let value = records[alive[start]].gases.get(g);
            let mut end = start + 1;
            while end < alive.len() && records[alive[end]].gases.get(g) == value {
                end += 1;
            }
            let span = records[alive[end - 1]].minute() - records[alive[start]].minute() + 1;
            if span > i64::from(cfg.stuck_run_len) {
                for pos in start..end {
                    flags.entry(pos).or_insert(RejectReason::StuckSensor(g));
                }
            }
            start = end;
        }
    }
    flags.into_iter().collect()
}

fn detect_spikes<T: Scalar>(records: &[SensorRecord<T>], alive: &[usize], cfg: &QcConfig<T>) -> Vec<(usize, RejectReason)> {
    let n = alive.len();
    let h = cfg.spike_half_window;
    let mut flags: BTreeMap<usize, RejectReason> = BTreeMap::new();
    let mut window = Vec::with_capacity(2 * h + 1);
    let mut deviations = Vec::with_capacity(2 * h + 1);
    for g in GasSpecies::ALL {
        let values: Vec<T> = alive.iter().map(|&i| records[i].gases.get(g)).collect();
        for i in 0..n {
            let lo = i.saturating_sub(h);
            let hi = (i + h + 1).min(n);
            if hi - lo < MIN_SPIKE_WINDOW {
                continue;
            }
            window.clear();
            window.extend_from_slice(&values[lo..hi]);
            let med = median_in_place(&mut window);
            deviations.clear();
            deviations.extend(window.iter().map(|&v| (v - med).abs()));
            let mad = median_in_place(&mut deviations);
            let scale = (T::lit(MAD_TO_SIGMA) * mad).max(cfg.spike_rel_floor * med.abs()).max(T::min_positive_value());
            if (values[i] - med).abs() > cfg.spike_factor * scale {
                flags.entry(i).or_insert(RejectReason::Spike(g));
            }
        }
    }
    flags.into_iter().collect()
}

fn sort_floats<T: Scalar>(v: &mut [T]) {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
}

fn median_in_place<T: Scalar>(v: &mut [T]) -> T {
    sort_floats(v);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0)
    }
}

/// Linear-interpolated quantile of sorted data.
fn quantile_sorted<T: Scalar>(sorted: &[T], q: T) -> T {
    let pos = q * T::lit((sorted.len() - 1) as f64);
    let lo = pos.floor();
    let i = lo.to_usize().unwrap_or(0).min(sorted.len() - 1);
    if i + 1 >= sorted.len() {
        return sorted[i];
    }
    sorted[i] + (pos - lo) * (sorted[i + 1] - sorted[i])
}

/// One [`NodeSample`] per (node, minute) holding arithmetic means.
///
/// Records inside a bucket are summed in `(seq, timestamp)` order so the
/// output does not depend on input order.
pub fn minute_aggregate<T: Scalar>(records: &[SensorRecord<T>]) -> Vec<NodeSample<T>> {
    let mut buckets: BTreeMap<(&str, i64), Vec<&SensorRecord<T>>> = BTreeMap::new();
    for r in records {
        buckets.entry((r.node_id.as_str(), r.minute())).or_default().push(r);
    }
    buckets
        .into_iter()
        .map(|((node, minute), mut rs)| {
            rs.sort_by_key(|r| (r.seq, r.timestamp));
            let n = T::lit(rs.len() as f64);
            let mut gases = GasVector::zeros();
            let mut env = EnvConditions { temperature: T::zero(), relative_humidity: T::zero(), wind_speed: T::zero() };
            for r in &rs {
                for g in GasSpecies::ALL {
                    gases[g] += r.gases[g];
                }
                env.temperature += r.env.temperature;
                env.relative_humidity += r.env.relative_humidity;
                env.wind_speed += r.env.wind_speed;
            }
            NodeSample {
                node_id: node.to_string(),
                minute,
                gases: gases.scale(T::one() / n),
                env: EnvConditions {
                    temperature: env.temperature / n,
                    relative_humidity: env.relative_humidity / n,
                    wind_speed: env.wind_speed / n,
                },
                sample_count: rs.len() as u32,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Slot<T> {
    Observed(NodeSample<T>),
    Imputed { gases: GasVector<T>, env: EnvConditions<T> },
    Missing,
}

/// Contiguous per-minute series of one node; `slots[i]` is minute `first_minute + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinuteSeries<T> {
    pub node_id: String,
    pub first_minute: i64,
    pub slots: Vec<Slot<T>>,
}

impl<T: Scalar> MinuteSeries<T> {
    pub fn get(&self, minute: i64) -> Option<(&GasVector<T>, &EnvConditions<T>)> {
        let i = usize::try_from(minute - self.first_minute).ok()?;
        match self.slots.get(i)? {
            Slot::Observed(s) => Some((&s.gases, &s.env)),
            Slot::Imputed { gases, env } => Some((gases, env)),
            Slot::Missing => None,
        }
    }

    /// Non-missing minutes as `(minute, gases)`.
    pub fn present(&self) -> Vec<(i64, GasVector<T>)> {
        (0..self.slots.len() as i64)
            .filter_map(|i| self.get(self.first_minute + i).map(|(g, _)| (self.first_minute + i, *g)))
            .collect()
    }

    pub fn count_missing(&self) -> usize {
        self.slots.iter().filter(|s| matches!(s, Slot::Missing)).count()
    }

    pub fn count_imputed(&self) -> usize {
        self.slots.iter().filter(|s| matches!(s, Slot::Imputed { .. })).count()
    }
}

/// Fills runs of at most `max_gap` missing minutes by per-channel linear
/// interpolation; longer runs stay [`Slot::Missing`].
///
/// `samples` must belong to one node and be sorted by minute.
pub fn impute_gaps<T: Scalar>(samples: &[NodeSample<T>], max_gap: u32) -> MinuteSeries<T> {
    let Some(first) = samples.first() else {
        return MinuteSeries { node_id: String::new(), first_minute: 0, slots: Vec::new() };
    };
    let mut slots = Vec::new();
    let mut prev: Option<&NodeSample<T>> = None;
    for s in samples {
        if let Some(p) = prev {
            let gap = s.minute - p.minute - 1;
            if gap > 0 {
                if gap <= i64::from(max_gap) {
                    let span = T::lit((gap + 1) as f64);
                    for k in 1..=gap {
                        let f = T::lit(k as f64) / span;
                        let lerp = |a: T, b: T| a + f * (b - a);
                        slots.push(Slot::Imputed {
                            gases: p.gases.zip_map(&s.gases, |_, a, b| lerp(a, b)),
                            env: EnvConditions {
                                temperature: lerp(p.env.temperature, s.env.temperature),
                                relative_humidity: lerp(p.env.relative_humidity, s.env.relative_humidity),
                                wind_speed: lerp(p.env.wind_speed, s.env.wind_speed),
                            },
                        });
                    }
                } else {
                    slots.extend((0..gap).map(|_| Slot::Missing));
                }
            }
        }
        slots.push(Slot::Observed(s.clone()));
        prev = Some(s);
    }
    MinuteSeries { node_id: first.node_id.clone(), first_minute: first.minute, slots }
}

/// Ambient (non-traffic) concentration per gas, native units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineVector<T>(pub GasVector<T>);

impl<T: Scalar> BaselineVector<T> {
    pub fn zeros() -> Self {
        BaselineVector(GasVector::zeros())
    }
}

const BASELINE_STEP_MINUTES: i64 = 60;

/// Baseline per gas: the lower `quantile` of each `window`-minute window
/// (windows advance hourly), then the median over windows.
///
/// `series` is `(minute, gases)` sorted by minute. A series shorter than the
/// window is treated as a single window.
pub fn baseline_estimate<T: Scalar>(
    series: &[(i64, GasVector<T>)],
    window: u32,
    quantile: T,
) -> Result<BaselineVector<T>, PreprocessError> {
    if window < 60 {
        return Err(PreprocessError::InvalidParameter("baseline window must be at least 60 minutes".into()));
    }
    if !(quantile > T::zero() && quantile < T::lit(0.5)) {
        return Err(PreprocessError::InvalidParameter("baseline quantile must lie in (0, 0.5)".into()));
    }
    let (Some(first), Some(last)) = (series.first(), series.last()) else {
        return Err(PreprocessError::EmptySeries);
    };
    let window = i64::from(window);
    let mut bounds = Vec::new();
    let mut end = first.0 + window - 1;
    if end > last.0 {
        bounds.push((0, series.len()));
    }
    let (mut lo, mut hi) = (0, 0);
    while end <= last.0 {
        while hi < series.len() && series[hi].0 <= end {
            hi += 1;
        }
        while series[lo].0 <= end - window {
            lo += 1;
        }
        if hi > lo {
            bounds.push((lo, hi));
        }
        end += BASELINE_STEP_MINUTES;
    }

    let mut out = GasVector::zeros();
    let mut buf = Vec::new();
    for g in GasSpecies::ALL {
        let mut rolling = Vec::with_capacity(bounds.len());
        for &(lo, hi) in &bounds {
            buf.clear();
            buf.extend(series[lo..hi].iter().map(|(_, v)| v.get(g)));
            sort_floats(&mut buf);
            rolling.push(quantile_sorted(&buf, quantile));
        }
        out[g] = median_in_place(&mut rolling);
    }
    Ok(BaselineVector(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn rec(node: &str, seq: u64, ts: i64, co: f64) -> SensorRecord<f64> {
        SensorRecord {
            node_id: node.into(),
            seq,
            timestamp: ts,
            gases: GasVector::new([co, 0.01 + 0.001 * (seq as f64).sin(), 0.3 + 0.01 * (seq as f64).cos(), 0.05 + 0.001 * (0.7 * seq as f64).sin()]),
            env: EnvConditions { temperature: 20.0, relative_humidity: 40.0, wind_speed: 1.0 },
        }
    }

    fn smooth(n: u64) -> Vec<SensorRecord<f64>> {
        (0..n).map(|i| rec("n1", i + 1, 60 * i as i64, 1.5 + 0.5 * (i as f64 / 30.0).sin())).collect()
    }

    fn sample(minute: i64, co: f64) -> NodeSample<f64> {
        NodeSample {
            node_id: "n1".into(),
            minute,
            gases: GasVector::new([co, 0.0, 0.0, 0.0]),
            env: EnvConditions { temperature: 10.0, relative_humidity: 50.0, wind_speed: 1.0 },
            sample_count: 1,
        }
    }

    #[test]
    fn smooth_series_passes() {
        let out = qc_filter(&smooth(120), &QcConfig::default());
        assert_eq!(out.clean.len(), 120);
        assert!(out.rejected.is_empty());
    }

    #[test]
    fn stuck_run_is_flagged() {
        let mut rs = smooth(120);
        for r in &mut rs[40..55] {
            r.gases[GasSpecies::Co] = 1.0;
        }
        let out = qc_filter(&rs, &QcConfig::default());
        assert_eq!(out.rejected.len(), 15);
        assert!(out.rejected.iter().all(|(_, why)| *why == RejectReason::StuckSensor(GasSpecies::Co)));
    }

    #[test]
    fn run_within_limit_is_kept() {
        let mut rs = smooth(120);
        for r in &mut rs[40..50] {
            r.gases[GasSpecies::Co] = 1.0;
        }
        assert!(qc_filter(&rs, &QcConfig::default()).rejected.is_empty());
    }

    #[test]
    fn spike_is_flagged() {
        let mut rs = smooth(120);
        rs[60].gases[GasSpecies::Hc] *= 50.0;
        let out = qc_filter(&rs, &QcConfig::default());
        assert_eq!(out.rejected.len(), 1);
        assert_eq!(out.rejected[0].0.seq, 61);
        assert_eq!(out.rejected[0].1, RejectReason::Spike(GasSpecies::Hc));
    }

    #[test]
    fn range_and_invalid_records_are_rejected() {
        let mut rs = smooth(30);
        rs[3].gases[GasSpecies::Co] = 150.0;
        rs[7].gases[GasSpecies::So2] = -0.1;
        let out = qc_filter(&rs, &QcConfig::default());
        let codes: Vec<_> = out.rejected.iter().map(|(r, why)| (r.seq, why.code())).collect();
        assert_eq!(codes, [(4, "OUT_OF_RANGE"), (8, "INVALID")]);
    }

    #[test]
    fn config_validation() {
        let mut cfg = QcConfig::<f64>::default();
        assert!(cfg.validate().is_ok());
        cfg.stuck_run_len = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = QcConfig::<f64>::default();
        cfg.ranges[GasSpecies::Soot] = (5.0, 1.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn aggregate_means_and_counts() {
        let rs = vec![rec("n1", 1, 60, 1.0), rec("n1", 2, 80, 2.0), rec("n1", 3, 119, 3.0), rec("n1", 4, 120, 5.0)];
        let out = minute_aggregate(&rs);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].minute, 1);
        assert_eq!(out[0].sample_count, 3);
        assert_abs_diff_eq!(out[0].gases[GasSpecies::Co], 2.0, epsilon = 1e-12);
        assert_eq!(out[1].sample_count, 1);
    }

    #[test]
    fn impute_fills_short_gap_linearly() {
        let s = impute_gaps(&[sample(0, 1.0), sample(3, 3.0)], 3);
        assert_eq!(s.slots.len(), 4);
        assert_abs_diff_eq!(s.get(1).unwrap().0[GasSpecies::Co], 1.0 + 2.0 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.get(2).unwrap().0[GasSpecies::Co], 1.0 + 4.0 / 3.0, epsilon = 1e-9);
        assert_eq!(s.count_imputed(), 2);
    }

    #[test]
    fn impute_leaves_long_gap_missing() {
        let s = impute_gaps(&[sample(0, 1.0), sample(11, 3.0)], 3);
        assert_eq!(s.count_missing(), 10);
        assert!(s.get(5).is_none());
        assert_eq!(s.present().len(), 2);
    }

    #[test]
    fn impute_without_gaps_is_identity() {
        let input: Vec<_> = (0..5).map(|m| sample(m, m as f64)).collect();
        let s = impute_gaps(&input, 3);
        let observed: Vec<_> = s.slots.iter().map(|sl| match sl {
            Slot::Observed(x) => x.clone(),
            other => panic!("unexpected {other:?}"),
        }).collect();
        assert_eq!(observed, input);
    }

    #[test]
    fn baseline_of_constant_is_constant() {
        let series: Vec<_> = (0..3000).map(|m| (m, GasVector::splat(0.42))).collect();
        let b = baseline_estimate(&series, 1440, 0.05).unwrap();
        assert_eq!(b.0, GasVector::splat(0.42));
    }

    #[test]
    fn baseline_finds_floor_under_daytime_bumps() {
        // 0.1 floor, traffic bumps 07:00-21:00 plus small noise.
        let series: Vec<_> = (0..3 * 1440)
            .map(|m: i64| {
                let hour = (m % 1440) as f64 / 60.0;
                let bump = if (7.0..21.0).contains(&hour) { 1.5 * ((hour - 7.0) / 14.0 * std::f64::consts::PI).sin() } else { 0.0 };
                let wiggle = 0.003 * ((m as f64) * 0.7).sin().abs();
                (m, GasVector::splat(0.1 + bump + wiggle))
            })
            .collect();
        let b = baseline_estimate(&series, 1440, 0.05).unwrap();
        for (_, v) in b.0.iter() {
            assert!((v - 0.1).abs() <= 0.01, "baseline {v}");
        }
    }

    #[test]
    fn baseline_errors() {
        assert_eq!(baseline_estimate::<f64>(&[], 1440, 0.05), Err(PreprocessError::EmptySeries));
        let s = vec![(0, GasVector::splat(1.0))];
        assert!(baseline_estimate(&s, 30, 0.05).is_err());
        assert!(baseline_estimate(&s, 60, 0.6).is_err());
    }

    fn arb_series() -> impl Strategy<Value = Vec<SensorRecord<f64>>> {
        prop::collection::vec((0.0..20.0f64, 0.0..1.0f64, 0.0..5.0f64, 0u8..3), 10..150).prop_map(|vals| {
            vals.into_iter()
                .enumerate()
                .map(|(i, (co, so2, hc, node))| SensorRecord {
                    node_id: format!("n{node}"),
                    seq: i as u64 + 1,
                    timestamp: 60 * i as i64,
                    gases: GasVector::new([co, so2, hc, 0.1]),
                    env: EnvConditions { temperature: 15.0, relative_humidity: 50.0, wind_speed: 1.0 },
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn qc_is_idempotent_and_partitions(records in arb_series()) {
            let cfg = QcConfig::default();
            let out = qc_filter(&records, &cfg);
            prop_assert_eq!(out.clean.len() + out.rejected.len(), records.len());
            let mut seen: Vec<u64> = out.clean.iter().map(|r| r.seq).chain(out.rejected.iter().map(|(r, _)| r.seq)).collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, records.iter().map(|r| r.seq).collect::<Vec<_>>());
            let again = qc_filter(&out.clean, &cfg);
            prop_assert!(again.rejected.is_empty());
        }

        #[test]
        fn aggregate_is_permutation_invariant(records in arb_series(), seed in any::<u64>()) {
            let mut shuffled = records.clone();
            let n = shuffled.len();
            let mut state = seed | 1;
            for i in (1..n).rev() {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                shuffled.swap(i, (state % (i as u64 + 1)) as usize);
            }
            // Stack several records into the same minute to exercise summation order.
            let squash = |rs: &mut Vec<SensorRecord<f64>>| for r in rs.iter_mut() { r.timestamp /= 4; };
            let (mut a, mut b) = (records, shuffled);
            squash(&mut a);
            squash(&mut b);
            prop_assert_eq!(minute_aggregate(&a), minute_aggregate(&b));
        }

        #[test]
        fn baseline_within_series_bounds(vals in prop::collection::vec(0.0..10.0f64, 1..400), q in 0.01..0.49f64) {
            let series: Vec<_> = vals.iter().enumerate().map(|(i, &v)| (i as i64 * 7, GasVector::splat(v))).collect();
            let b = baseline_estimate(&series, 60, q).unwrap();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (_, v) in b.0.iter() {
                prop_assert!(v >= lo && v <= hi);
            }
        }
    }
}
