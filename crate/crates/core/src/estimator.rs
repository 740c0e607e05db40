//! From per-minute gas concentrations to a traffic estimate.
//!
//! A node's estimate is a weighted sum of the excess concentration of each gas
//! over its ambient baseline:
//!
//! ```text
//! estimate = Σ_g  w_g · a_g(env) · (1 + κ·wind) · max(0, c_g − b_g)
//! ```
//!
//! `a_CO` shrinks in cold weather (other CO sources are active then), `a_HC`
//! follows humidity linearly, and the wind term undoes ventilation losses of
//! the traffic plume. Node estimates of the array are fused by their plain mean.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::BaselineVector;
use crate::types::{EnvConditions, GasSpecies, GasVector};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("INSUFFICIENT_NODES: {available} node estimate(s), at least {required} required")]
    InsufficientNodes { available: usize, required: usize },
    #[error("NONPOSITIVE_CAPACITY: street capacity must be > 0")]
    NonpositiveCapacity,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid correction parameter: {0}")]
    InvalidParams(String),
}

/// Vehicles/min contributed per unit of excess concentration, per gas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightVector<T>(GasVector<T>);

impl<T: Scalar> WeightVector<T> {
    pub fn new(w: GasVector<T>) -> Result<Self, EstimateError> {
        match w.iter().find(|(_, v)| !(v.is_finite() && *v >= T::zero())) {
            Some((g, v)) => Err(EstimateError::InvalidWeights(format!("{g} weight {v} must be finite and >= 0"))),
            None => Ok(WeightVector(w)),
        }
    }

    pub fn zeros() -> Self {
        WeightVector(GasVector::zeros())
    }

    pub fn get(&self, g: GasSpecies) -> T {
        self.0.get(g)
    }

    pub fn as_gas_vector(&self) -> &GasVector<T> {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct EnvCorrectionParams<T: Scalar> {
    /// °C at and below which the CO factor sits at `co_floor`.
    pub co_theta_lo: T,
    /// °C at and above which the CO factor is 1.
    pub co_theta_hi: T,
    pub co_floor: T,
    /// Change of the HC factor per percent of relative humidity away from 50 %.
    pub hc_rh_slope: T,
    /// Dilution compensation per m/s of wind.
    pub wind_kappa: T,
}

impl<T: Scalar> Default for EnvCorrectionParams<T> {
    fn default() -> Self {
        EnvCorrectionParams {
            co_theta_lo: T::lit(-5.0),
            co_theta_hi: T::lit(15.0),
            co_floor: T::lit(0.3),
            hc_rh_slope: T::zero(),
            wind_kappa: T::lit(0.15),
        }
    }
}

impl<T: Scalar> EnvCorrectionParams<T> {
    pub fn validate(&self) -> Result<(), EstimateError> {
        let bad = |m: &str| Err(EstimateError::InvalidParams(m.to_string()));
        if !(self.co_theta_lo < self.co_theta_hi) {
            return bad("co_theta_lo must be below co_theta_hi");
        }
        if !(self.co_floor > T::zero() && self.co_floor <= T::one()) {
            return bad("co_floor must lie in (0, 1]");
        }
        if !(self.wind_kappa >= T::zero() && self.wind_kappa.is_finite()) {
            return bad("wind_kappa must be finite and >= 0");
        }
        if !self.hc_rh_slope.is_finite() {
            return bad("hc_rh_slope must be finite");
        }
        Ok(())
    }
}

/// Clamped-linear CO weight factor: `co_floor` when cold, 1 when warm.
pub fn co_temperature_factor<T: Scalar>(temp: T, p: &EnvCorrectionParams<T>) -> T {
    let ramp = (temp - p.co_theta_lo) / (p.co_theta_hi - p.co_theta_lo);
    ramp.max(p.co_floor).min(T::one())
}

/// Multiplies every channel by `1 + wind_kappa · wind_speed`.
pub fn wind_dilution_correct<T: Scalar>(g: &GasVector<T>, wind_speed: T, p: &EnvCorrectionParams<T>) -> GasVector<T> {
    g.scale(T::one() + p.wind_kappa * wind_speed)
}

/// Environment factor `a_g` per gas.
pub fn env_factors<T: Scalar>(env: &EnvConditions<T>, p: &EnvCorrectionParams<T>) -> GasVector<T> {
    let a_co = co_temperature_factor(env.temperature, p);
    let a_hc = T::one() + p.hc_rh_slope * (env.relative_humidity - T::lit(50.0));
    GasVector::new([a_co, T::one(), a_hc.max(T::zero()), T::one()])
}

/// Per-gas terms `w_g · a_g · (1 + κ·wind) · max(0, c_g − b_g)`.
pub fn node_contributions<T: Scalar>(
    gases: &GasVector<T>,
    env: &EnvConditions<T>,
    w: &WeightVector<T>,
    b: &BaselineVector<T>,
    p: &EnvCorrectionParams<T>,
) -> GasVector<T> {
    let excess = gases.zip_map(&b.0, |_, c, base| (c - base).max(T::zero()));
    let corrected = wind_dilution_correct(&excess, env.wind_speed, p);
    let a = env_factors(env, p);
    GasVector::from_fn(|g| w.get(g) * a[g] * corrected[g])
}

/// Vehicles/min seen by one node, never negative.
pub fn node_estimate<T: Scalar>(
    gases: &GasVector<T>,
    env: &EnvConditions<T>,
    w: &WeightVector<T>,
    b: &BaselineVector<T>,
    p: &EnvCorrectionParams<T>,
) -> T {
    node_contributions(gases, env, w, b, p).sum().max(T::zero())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fused<T> {
    pub value: T,
    pub n_nodes_used: usize,
}

/// Mean of the available node estimates.
pub fn array_fuse<T: Scalar>(per_node: &BTreeMap<String, T>, min_nodes: usize) -> Result<Fused<T>, EstimateError> {
    let n = per_node.len();
    if n == 0 || n < min_nodes {
        return Err(EstimateError::InsufficientNodes { available: n, required: min_nodes.max(1) });
    }
    let sum: T = per_node.values().copied().sum();
    Ok(Fused { value: sum / T::lit(n as f64), n_nodes_used: n })
}

pub fn congestion_index<T: Scalar>(vehicles_per_min: T, capacity_veh_per_min: T) -> Result<T, EstimateError> {
    if !(capacity_veh_per_min > T::zero()) {
        return Err(EstimateError::NonpositiveCapacity);
    }
    Ok((vehicles_per_min / capacity_veh_per_min).max(T::zero()).min(T::one()))
}

/// Segment-level estimate for one minute.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficEstimate<T> {
    pub minute: i64,
    pub vehicles_per_min: T,
    pub congestion_index: T,
    pub node_estimates: BTreeMap<String, T>,
    pub n_nodes_used: usize,
    /// Mean over nodes of each gas term; sums to `vehicles_per_min`.
    pub contributions: GasVector<T>,
}

/// Everything the estimator needs besides the readings themselves.
#[derive(Debug, Clone)]
pub struct EstimatorModel<T: Scalar> {
    pub weights: WeightVector<T>,
    pub baselines: BTreeMap<String, BaselineVector<T>>,
    pub params: EnvCorrectionParams<T>,
    pub capacity_veh_per_min: T,
    pub min_nodes: usize,
}

impl<T: Scalar> EstimatorModel<T> {
    /// Estimates one minute from `(node_id, gases, env)` readings. Nodes
    /// without a baseline are skipped.
    pub fn estimate_minute<'a>(
        &self,
        minute: i64,
        readings: impl IntoIterator<Item = (&'a str, &'a GasVector<T>, &'a EnvConditions<T>)>,
    ) -> Result<TrafficEstimate<T>, EstimateError> {
        let mut node_estimates = BTreeMap::new();
        let mut contrib_sum = GasVector::zeros();
        for (node, gases, env) in readings {
            let Some(b) = self.baselines.get(node) else { continue };
            let terms = node_contributions(gases, env, &self.weights, b, &self.params);
            contrib_sum = contrib_sum.zip_map(&terms, |_, a, t| a + t);
            node_estimates.insert(node.to_string(), terms.sum().max(T::zero()));
        }
        let fused = array_fuse(&node_estimates, self.min_nodes)?;
        let n = T::lit(fused.n_nodes_used as f64);
        Ok(TrafficEstimate {
            minute,
            vehicles_per_min: fused.value,
            congestion_index: congestion_index(fused.value, self.capacity_veh_per_min)?,
            node_estimates,
            n_nodes_used: fused.n_nodes_used,
            contributions: contrib_sum.scale(T::one() / n),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn env(temp: f64, rh: f64, wind: f64) -> EnvConditions<f64> {
        EnvConditions { temperature: temp, relative_humidity: rh, wind_speed: wind }
    }

    #[test]
    fn co_factor_examples() {
        let p = EnvCorrectionParams::<f64>::default();
        assert_eq!(co_temperature_factor(25.0, &p), 1.0);
        assert_eq!(co_temperature_factor(-10.0, &p), 0.3);
        assert_abs_diff_eq!(co_temperature_factor(5.0, &p), 0.5, epsilon = 1e-15);
        let pf = EnvCorrectionParams::<f32>::default();
        assert_abs_diff_eq!(co_temperature_factor(5.0f32, &pf), 0.5, epsilon = 1e-6);
    }

    #[test]
    fn wind_correction_examples() {
        let p = EnvCorrectionParams::<f64>::default();
        let g = GasVector::new([1.0, 0.5, 2.0, 0.1]);
        assert_eq!(wind_dilution_correct(&g, 0.0, &p), g);
        let w2 = wind_dilution_correct(&g, 2.0, &p);
        for (gas, v) in w2.iter() {
            assert_abs_diff_eq!(v, g[gas] * 1.3, epsilon = 1e-12);
        }
    }

    #[test]
    fn baseline_level_gives_zero() {
        let p = EnvCorrectionParams::default();
        let c = GasVector::new([0.5, 0.005, 0.2, 0.02]);
        let w = WeightVector::new(GasVector::new([3.0, 100.0, 5.0, 20.0])).unwrap();
        assert_eq!(node_estimate(&c, &env(20.0, 40.0, 2.0), &w, &BaselineVector(c), &p), 0.0);
    }

    #[test]
    fn one_term_weighted_sum() {
        let p = EnvCorrectionParams { wind_kappa: 0.0, ..Default::default() };
        let w = WeightVector::new(GasVector::new([0.0, 2.0, 0.0, 0.0])).unwrap();
        let c = GasVector::new([0.0, 3.5, 0.0, 0.0]);
        let b = BaselineVector(GasVector::new([0.0, 0.5, 0.0, 0.0]));
        assert_abs_diff_eq!(node_estimate(&c, &env(20.0, 50.0, 0.0), &w, &b, &p), 6.0, epsilon = 1e-12);
    }

    #[test]
    fn cold_reduces_co_contribution() {
        let p = EnvCorrectionParams::default();
        let w = WeightVector::new(GasVector::splat(1.0)).unwrap();
        let c = GasVector::new([2.0, 0.01, 0.4, 0.05]);
        let b = BaselineVector::zeros();
        let cold = node_contributions(&c, &env(0.0, 50.0, 1.0), &w, &b, &p)[GasSpecies::Co];
        let warm = node_contributions(&c, &env(25.0, 50.0, 1.0), &w, &b, &p)[GasSpecies::Co];
        assert!(cold < warm);
    }

    #[test]
    fn fuse_examples() {
        let m: BTreeMap<String, f64> = [("a".into(), 4.0), ("b".into(), 6.0)].into();
        assert_eq!(array_fuse(&m, 1).unwrap(), Fused { value: 5.0, n_nodes_used: 2 });
        let same: BTreeMap<String, f64> = (0..4).map(|i| (format!("n{i}"), 7.25)).collect();
        assert_eq!(array_fuse(&same, 1).unwrap().value, 7.25);
        assert!(matches!(array_fuse(&BTreeMap::<String, f64>::new(), 1), Err(EstimateError::InsufficientNodes { .. })));
        assert!(matches!(array_fuse(&m, 3), Err(EstimateError::InsufficientNodes { available: 2, required: 3 })));
    }

    #[test]
    fn congestion_index_examples() {
        assert_eq!(congestion_index(0.0, 50.0).unwrap(), 0.0);
        assert_eq!(congestion_index(50.0, 50.0).unwrap(), 1.0);
        assert_eq!(congestion_index(100.0, 50.0).unwrap(), 1.0);
        assert_eq!(congestion_index(1.0, 0.0), Err(EstimateError::NonpositiveCapacity));
    }

    #[test]
    fn weights_must_be_nonnegative() {
        assert!(WeightVector::new(GasVector::new([1.0, -0.1, 0.0, 0.0])).is_err());
        assert!(WeightVector::new(GasVector::new([1.0, f64::NAN, 0.0, 0.0])).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(EnvCorrectionParams::<f64>::default().validate().is_ok());
        let p = EnvCorrectionParams { co_theta_lo: 20.0, ..EnvCorrectionParams::<f64>::default() };
        assert!(p.validate().is_err());
        let p = EnvCorrectionParams { co_floor: 0.0, ..EnvCorrectionParams::<f64>::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn fused_variance_of_four_nodes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let sigma = 2.0;
        let noise = Normal::new(0.0, sigma).unwrap();
        let trials = 10_000;
        let fused: Vec<f64> = (0..trials)
            .map(|_| {
                let m: BTreeMap<String, f64> = (0..4).map(|i| (format!("n{i}"), 10.0 + noise.sample(&mut rng))).collect();
                array_fuse(&m, 4).unwrap().value
            })
            .collect();
        let mean = fused.iter().sum::<f64>() / trials as f64;
        let var = fused.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        assert!(var <= 0.35 * sigma * sigma, "var {var}");
    }

    #[test]
    fn estimate_minute_fuses_and_breaks_down() {
        let model = EstimatorModel {
            weights: WeightVector::new(GasVector::new([2.0, 0.0, 0.0, 0.0])).unwrap(),
            baselines: [("a".to_string(), BaselineVector::zeros()), ("b".to_string(), BaselineVector::zeros())].into(),
            params: EnvCorrectionParams { wind_kappa: 0.0, ..Default::default() },
            capacity_veh_per_min: 10.0,
            min_nodes: 1,
        };
        let (ga, gb, gc) = (GasVector::new([1.0, 0.0, 0.0, 0.0]), GasVector::new([3.0, 0.0, 0.0, 0.0]), GasVector::splat(9.0));
        let e = env(20.0, 50.0, 0.0);
        let est = model.estimate_minute(7, [("a", &ga, &e), ("b", &gb, &e), ("unknown", &gc, &e)]).unwrap();
        assert_eq!(est.n_nodes_used, 2);
        assert_abs_diff_eq!(est.vehicles_per_min, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(est.congestion_index, 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(est.contributions.sum(), est.vehicles_per_min, epsilon = 1e-12);
    }

    fn arb_gas() -> impl Strategy<Value = GasVector<f64>> {
        prop::array::uniform4(0.0..10.0f64).prop_map(GasVector::new)
    }

    proptest! {
        #[test]
        fn linear_in_concentration(c1 in arb_gas(), c2 in arb_gas(), a in 0.0..5.0f64, b in 0.0..5.0f64,
                                   w in prop::array::uniform4(0.0..3.0f64), temp in -20.0..40.0f64, wind in 0.0..8.0f64) {
            let p = EnvCorrectionParams { hc_rh_slope: 0.01, ..Default::default() };
            let w = WeightVector::new(GasVector::new(w)).unwrap();
            let base = BaselineVector::zeros();
            let e = env(temp, 65.0, wind);
            let mix = c1.zip_map(&c2, |_, x, y| a * x + b * y);
            let lhs = node_estimate(&mix, &e, &w, &base, &p);
            let rhs = a * node_estimate(&c1, &e, &w, &base, &p) + b * node_estimate(&c2, &e, &w, &base, &p);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }

        #[test]
        fn monotone_in_each_gas(c in arb_gas(), bump in 0.0..5.0f64, gi in 0usize..4,
                                w in prop::array::uniform4(0.0..3.0f64), base in arb_gas()) {
            let p = EnvCorrectionParams::default();
            let w = WeightVector::new(GasVector::new(w)).unwrap();
            let b = BaselineVector(base);
            let e = env(10.0, 50.0, 1.0);
            let mut up = c;
            up[GasSpecies::ALL[gi]] += bump;
            prop_assert!(node_estimate(&up, &e, &w, &b, &p) >= node_estimate(&c, &e, &w, &b, &p));
        }

        #[test]
        fn co_factor_bounded_and_monotone(t1 in -60.0..60.0f64, t2 in -60.0..60.0f64) {
            let p = EnvCorrectionParams::default();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let (flo, fhi) = (co_temperature_factor(lo, &p), co_temperature_factor(hi, &p));
            prop_assert!(flo <= fhi);
            prop_assert!((0.3..=1.0).contains(&flo) && (0.3..=1.0).contains(&fhi));
        }

        #[test]
        fn fuse_is_permutation_invariant(vals in prop::collection::vec(0.0..100.0f64, 1..8)) {
            let fwd: BTreeMap<String, f64> = vals.iter().enumerate().map(|(i, &v)| (format!("n{i}"), v)).collect();
            let rev: BTreeMap<String, f64> = vals.iter().rev().enumerate().map(|(i, &v)| (format!("m{i}"), v)).collect();
            let a = array_fuse(&fwd, 1).unwrap().value;
            let b = array_fuse(&rev, 1).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}
