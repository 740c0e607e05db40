//! Scenario description and the minute-by-minute runner.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dispersion::BoxModel;
use super::profile::{DiurnalProfile, Schedule};
use super::sensor::{SensorParams, SensorState};
use crate::config::ConfigError;
use crate::types::{minute_of, EnvConditions, GasSpecies, GasVector, GroundTruthCount, SensorRecord};

const STEP_SECONDS: f64 = 1.0;
const STEPS_PER_MINUTE: usize = 60;
/// Offset of a node's reading inside its minute.
const READING_OFFSET_S: i64 = 30;

/// A vehicle class with its own emission signature and share of the fleet
/// over the day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleClass {
    pub name: String,
    /// Per-gas multiplier on the scenario's base emission factors.
    pub multipliers: GasVector<f64>,
    /// 24 hourly relative shares, linearly interpolated.
    pub share: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficNoise {
    /// Standard deviation of the day-to-day volume factor.
    pub day_sigma: f64,
    /// Stationary standard deviation of the minute-level AR(1) multiplier.
    pub minute_sigma: f64,
    /// Lag-one autocorrelation of the minute-level multiplier.
    pub minute_corr: f64,
}

impl Default for TrafficNoise {
    fn default() -> Self {
        TrafficNoise { day_sigma: 0.05, minute_sigma: 0.08, minute_corr: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Weather {
    /// m/s
    pub wind: Schedule,
    /// °C
    pub temp: Schedule,
    /// %
    pub rh: Schedule,
    /// Stationary standard deviation of AR(1) gusts added to the wind schedule.
    pub wind_jitter: f64,
}

impl Default for Weather {
    fn default() -> Self {
        Weather {
            wind: Schedule(vec![(0.0, 0.8), (6.0, 0.8), (10.0, 1.8), (14.0, 3.2), (18.0, 2.0), (22.0, 1.0)]),
            temp: Schedule(vec![(0.0, 19.0), (5.0, 17.0), (14.0, 31.0), (18.0, 28.0), (23.0, 21.0)]),
            rh: Schedule(vec![(0.0, 55.0), (5.0, 62.0), (14.0, 25.0), (20.0, 40.0)]),
            wind_jitter: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    pub id: String,
    #[serde(flatten)]
    pub params: SensorParams<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub duration_days: u32,
    /// Unix seconds of the first simulated minute; hours of day are UTC.
    pub start_ts: i64,
    pub rng_seed: u64,
    /// Street box volume, m³.
    pub street_volume: f64,
    /// Along-wind exchange length, m.
    pub exchange_length: f64,
    /// Deposition plus vertical exchange, 1/s.
    pub deposition_rate: f64,
    /// Street capacity, vehicles/min, used for the congestion index.
    pub capacity_veh_per_min: f64,
    /// Hold the box at its analytic equilibrium every minute instead of
    /// integrating it.
    pub quasi_steady: bool,
    pub ambient: GasVector<f64>,
    /// Per-vehicle source strength, concentration·m³/s per vehicle/min.
    pub emission_factors: GasVector<f64>,
    pub fleet: Vec<VehicleClass>,
    pub diurnal: DiurnalProfile,
    pub traffic_noise: TrafficNoise,
    pub weather: Weather,
    pub sensors: Vec<SensorSpec>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let sensor = |id: &str, gain: f64, offset: [f64; 4]| SensorSpec {
            id: id.to_string(),
            params: SensorParams {
                gain,
                offset: GasVector::new(offset),
                noise_sigma: GasVector::new([0.02, 0.0003, 0.005, 0.001]),
                drift_per_day: GasVector::new([0.004, 0.00004, 0.001, 0.0001]),
                tau: 30.0,
            },
        };
        let class = |name: &str, multipliers: [f64; 4], share: [f64; 24]| VehicleClass {
            name: name.to_string(),
            multipliers: GasVector::new(multipliers),
            share: share.to_vec(),
        };
        ScenarioConfig {
            duration_days: 1,
            start_ts: 1_556_755_200, // 2019-05-02T00:00:00Z
            rng_seed: 20_190_502,
            street_volume: 30_000.0,
            exchange_length: 100.0,
            deposition_rate: 1.0 / 15.0,
            capacity_veh_per_min: 60.0,
            quasi_steady: false,
            ambient: GasVector::new([0.5, 0.005, 0.2, 0.02]),
            emission_factors: GasVector::new([100.0, 0.5, 20.0, 2.5]),
            fleet: vec![
                class("petrol_car", [1.587, 0.529, 1.058, 0.317], [
                    0.45, 0.45, 0.42, 0.40, 0.42, 0.50, 0.58, 0.62, 0.62, 0.60, 0.60, 0.60, //
                    0.60, 0.60, 0.60, 0.60, 0.60, 0.62, 0.64, 0.64, 0.62, 0.58, 0.52, 0.48,
                ]),
                class("diesel_car", [0.670, 1.676, 0.447, 1.564], [
                    0.16, 0.15, 0.15, 0.15, 0.16, 0.18, 0.22, 0.24, 0.24, 0.22, 0.21, 0.20, //
                    0.20, 0.20, 0.21, 0.22, 0.23, 0.24, 0.24, 0.22, 0.20, 0.19, 0.18, 0.17,
                ]),
                class("motorcycle", [1.200, 0.200, 2.000, 0.200], [
                    0.05, 0.04, 0.03, 0.03, 0.03, 0.05, 0.10, 0.14, 0.14, 0.12, 0.10, 0.12, //
                    0.14, 0.12, 0.10, 0.10, 0.12, 0.14, 0.14, 0.12, 0.10, 0.08, 0.07, 0.06,
                ]),
                class("heavy", [0.563, 1.408, 0.451, 2.254], [
                    0.30, 0.31, 0.35, 0.37, 0.35, 0.25, 0.12, 0.04, 0.04, 0.08, 0.10, 0.08, //
                    0.06, 0.08, 0.10, 0.10, 0.08, 0.04, 0.02, 0.04, 0.08, 0.14, 0.21, 0.26,
                ]),
            ],
            diurnal: DiurnalProfile::default(),
            traffic_noise: TrafficNoise::default(),
            weather: Weather::default(),
            sensors: vec![
                sensor("n1", 1.00, [0.0; 4]),
                sensor("n2", 0.96, [0.02, 0.0002, 0.005, 0.001]),
                sensor("n3", 1.04, [-0.01, 0.0001, 0.0, 0.0005]),
                sensor("n4", 1.02, [0.01, -0.0001, 0.003, 0.0]),
            ],
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |key: &str, msg: String| Err(ConfigError::new(format!("scenario.{key}"), msg));
        if self.duration_days == 0 {
            return err("duration_days", "must be at least 1".into());
        }
        for (key, v) in [
            ("street_volume", self.street_volume),
            ("exchange_length", self.exchange_length),
            ("capacity_veh_per_min", self.capacity_veh_per_min),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return err(key, format!("must be positive, got {v}"));
            }
        }
        if !(self.deposition_rate >= 0.0 && self.deposition_rate.is_finite()) {
            return err("deposition_rate", "must be >= 0".into());
        }
        for (key, v) in [("ambient", &self.ambient), ("emission_factors", &self.emission_factors)] {
            if let Some((g, x)) = v.iter().find(|(_, x)| !(*x >= 0.0 && x.is_finite())) {
                return err(&format!("{key}.{}", g.key()), format!("must be finite and >= 0, got {x}"));
            }
        }
        for (i, c) in self.fleet.iter().enumerate() {
            if c.share.len() != 24 {
                return err(&format!("fleet[{i}].share"), format!("expected 24 hourly values, got {}", c.share.len()));
            }
            if c.share.iter().any(|s| !(*s >= 0.0 && s.is_finite())) || c.multipliers.iter().any(|(_, m)| !(m >= 0.0 && m.is_finite())) {
                return err(&format!("fleet[{i}]"), "shares and multipliers must be finite and >= 0".into());
            }
        }
        if !self.fleet.is_empty() {
            for h in 0..24 {
                if self.fleet.iter().map(|c| c.share[h]).sum::<f64>() <= 0.0 {
                    return err("fleet", format!("shares sum to zero at hour {h}"));
                }
            }
        }
        if let Err(e) = self.diurnal.check_shape() {
            return err("diurnal.anchors", e.to_string());
        }
        let tn = &self.traffic_noise;
        if !(tn.day_sigma >= 0.0 && tn.minute_sigma >= 0.0 && (0.0..1.0).contains(&tn.minute_corr)) {
            return err("traffic_noise", "sigmas must be >= 0 and minute_corr in [0, 1)".into());
        }
        for (key, s) in [("weather.wind", &self.weather.wind), ("weather.temp", &self.weather.temp), ("weather.rh", &self.weather.rh)] {
            if let Err(e) = s.validate() {
                return err(key, e);
            }
        }
        if !(self.weather.wind_jitter >= 0.0) {
            return err("weather.wind_jitter", "must be >= 0".into());
        }
        if self.sensors.is_empty() {
            return err("sensors", "at least one node is required".into());
        }
        let mut ids = std::collections::BTreeSet::new();
        for (i, s) in self.sensors.iter().enumerate() {
            if s.id.is_empty() || !ids.insert(s.id.as_str()) {
                return err(&format!("sensors[{i}].id"), "node ids must be non-empty and unique".into());
            }
            if let Err(e) = s.params.validate() {
                return err(&format!("sensors[{i}]"), e);
            }
        }
        Ok(())
    }

    pub fn box_model(&self) -> BoxModel<f64> {
        BoxModel {
            volume: self.street_volume,
            exchange_length: self.exchange_length,
            deposition_rate: self.deposition_rate,
            ambient: self.ambient,
            emission: self.emission_factors,
        }
    }

    /// Per-vehicle emission of the fleet mix at `hour`.
    pub fn fleet_emission(&self, hour: f64) -> GasVector<f64> {
        if self.fleet.is_empty() {
            return self.emission_factors;
        }
        let shares: Vec<f64> = self.fleet.iter().map(|c| Schedule::hourly(&c.share).at(hour)).collect();
        let total: f64 = shares.iter().sum();
        GasVector::from_fn(|g| {
            let mix: f64 = self.fleet.iter().zip(&shares).map(|(c, s)| s * c.multipliers[g]).sum();
            self.emission_factors[g] * mix / total
        })
    }

    pub fn total_minutes(&self) -> usize {
        self.duration_days as usize * 1440
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    /// Node records in time order (all nodes of a minute, then the next minute).
    pub records: Vec<SensorRecord<f64>>,
    pub truth: Vec<GroundTruthCount<f64>>,
    /// Minute-mean true box concentration, aligned with `truth`.
    pub true_concentration: Vec<GasVector<f64>>,
}

impl ScenarioOutput {
    pub fn mean_true_concentration(&self) -> GasVector<f64> {
        let n = self.true_concentration.len().max(1) as f64;
        GasVector::from_fn(|g| self.true_concentration.iter().map(|c| c[g]).sum::<f64>() / n)
    }
}

fn hour_of_day(ts: i64) -> f64 {
    ts.rem_euclid(86_400) as f64 / 3600.0
}

/// Runs the scenario. Output is a pure function of `cfg` (including its seed).
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutput, ConfigError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut normal = move || rng.sample::<f64, _>(StandardNormal);
    let model = cfg.box_model();
    let minutes = cfg.total_minutes();
    let tn = &cfg.traffic_noise;

    let day_factors: Vec<f64> = (0..cfg.duration_days).map(|_| (1.0 + tn.day_sigma * normal()).max(0.0)).collect();
    let innovation = (1.0 - tn.minute_corr * tn.minute_corr).sqrt();
    const WIND_CORR: f64 = 0.98;
    let wind_innovation = (1.0 - WIND_CORR * WIND_CORR).sqrt();
    let (mut traffic_ar, mut wind_ar) = (0.0, 0.0);

    let first_env = |hour: f64| EnvConditions {
        temperature: cfg.weather.temp.at(hour),
        relative_humidity: cfg.weather.rh.at(hour).clamp(0.0, 100.0),
        wind_speed: cfg.weather.wind.at(hour).max(0.0),
    };
    let start_hour = hour_of_day(cfg.start_ts);
    let mut c = model.steady_state_with(cfg.diurnal.at(start_hour), &cfg.fleet_emission(start_hour), first_env(start_hour).wind_speed);
    let mut sensors: Vec<SensorState<f64>> = cfg.sensors.iter().map(|_| SensorState::new(c)).collect();

    let mut out = ScenarioOutput {
        records: Vec::with_capacity(minutes * cfg.sensors.len()),
        truth: Vec::with_capacity(minutes),
        true_concentration: Vec::with_capacity(minutes),
    };
    let mut sums = vec![GasVector::<f64>::zeros(); cfg.sensors.len()];
    let mut readings_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ 0x5EED_5E45_0125_0001);

    for m in 0..minutes {
        let t0 = cfg.start_ts + 60 * m as i64;
        let hour = hour_of_day(t0);
        traffic_ar = tn.minute_corr * traffic_ar + innovation * tn.minute_sigma * normal();
        wind_ar = WIND_CORR * wind_ar + wind_innovation * cfg.weather.wind_jitter * normal();
        let vehicles = (cfg.diurnal.at(hour) * day_factors[m / 1440] * (1.0 + traffic_ar)).max(0.0);
        let env = EnvConditions { wind_speed: (cfg.weather.wind.at(hour) + wind_ar).max(0.0), ..first_env(hour) };
        let emission = cfg.fleet_emission(hour);

        sums.iter_mut().for_each(|s| *s = GasVector::zeros());
        let mut true_sum = GasVector::<f64>::zeros();
        if cfg.quasi_steady {
            c = model.steady_state_with(vehicles, &emission, env.wind_speed);
        }
        for _ in 0..STEPS_PER_MINUTE {
            if !cfg.quasi_steady {
                c = model.step_with(&c, vehicles, &emission, env.wind_speed, STEP_SECONDS);
            }
            true_sum = true_sum.zip_map(&c, |_, a, b| a + b);
            for ((state, spec), sum) in sensors.iter_mut().zip(&cfg.sensors).zip(sums.iter_mut()) {
                state.advance(&c, STEP_SECONDS, spec.params.tau);
                *sum = sum.zip_map(&state.lagged, |_, a, b| a + b);
            }
        }
        let per_step = 1.0 / STEPS_PER_MINUTE as f64;
        let elapsed = (60 * (m + 1)) as f64;
        for (spec, sum) in cfg.sensors.iter().zip(&sums) {
            let gases = spec.params.read(&sum.scale(per_step), elapsed, &mut readings_rng);
            out.records.push(SensorRecord {
                node_id: spec.id.clone(),
                seq: m as u64 + 1,
                timestamp: t0 + READING_OFFSET_S,
                gases,
                env,
            });
        }
        out.truth.push(GroundTruthCount { minute: minute_of(t0), vehicles_per_min: vehicles });
        out.true_concentration.push(true_sum.scale(per_step));
    }
    Ok(out)
}

/// Species ordering check used by reports: most to least abundant by mean.
pub fn species_by_mean(mean: &GasVector<f64>) -> Vec<GasSpecies> {
    let mut gs = GasSpecies::ALL.to_vec();
    gs.sort_by(|a, b| mean[*b].total_cmp(&mean[*a]));
    gs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_day() -> ScenarioConfig {
        ScenarioConfig::default()
    }

    #[test]
    fn default_day_counts() {
        let out = run_scenario(&one_day()).unwrap();
        assert_eq!(out.truth.len(), 1440);
        assert_eq!(out.records.len(), 1440 * 4);
        assert!(out.records.iter().all(|r| crate::types::validate_record(r).is_empty()));
    }

    #[test]
    fn same_seed_same_output() {
        let a = run_scenario(&one_day()).unwrap();
        let b = run_scenario(&one_day()).unwrap();
        assert_eq!(a, b);
        let mut other = one_day();
        other.rng_seed += 1;
        assert_ne!(run_scenario(&other).unwrap().records, a.records);
    }

    #[test]
    fn co_most_and_so2_least_abundant() {
        let out = run_scenario(&one_day()).unwrap();
        let mean = out.mean_true_concentration();
        assert!(mean[GasSpecies::Co] > mean[GasSpecies::So2]);
        let order = species_by_mean(&mean);
        assert_eq!(order.first(), Some(&GasSpecies::Co));
        assert_eq!(order.last(), Some(&GasSpecies::So2));
    }

    #[test]
    fn truth_follows_diurnal_shape() {
        let mut cfg = one_day();
        cfg.traffic_noise = TrafficNoise { day_sigma: 0.0, minute_sigma: 0.0, minute_corr: 0.0 };
        let out = run_scenario(&cfg).unwrap();
        let hourly = |h: usize| out.truth[h * 60..(h + 1) * 60].iter().map(|t| t.vehicles_per_min).sum::<f64>() / 60.0;
        let min_hour = (0..24).min_by(|&a, &b| hourly(a).total_cmp(&hourly(b))).unwrap();
        assert!((2..5).contains(&min_hour));
        assert!(hourly(14) < hourly(11));
    }

    #[test]
    fn validation_names_offending_key() {
        let mut cfg = one_day();
        cfg.street_volume = 0.0;
        assert_eq!(cfg.validate().unwrap_err().key, "scenario.street_volume");
        let mut cfg = one_day();
        cfg.sensors[1].params.tau = -1.0;
        assert_eq!(cfg.validate().unwrap_err().key, "scenario.sensors[1]");
        let mut cfg = one_day();
        cfg.sensors.clear();
        assert_eq!(run_scenario(&cfg).unwrap_err().key, "scenario.sensors");
    }

    #[test]
    fn fleet_mix_weights_emission() {
        let cfg = one_day();
        let night = cfg.fleet_emission(3.0);
        let day = cfg.fleet_emission(8.0);
        // Heavy vehicles dominate at night: more soot per vehicle.
        assert!(night[GasSpecies::Soot] > day[GasSpecies::Soot]);
        let mut flat = one_day();
        flat.fleet.clear();
        assert_eq!(flat.fleet_emission(3.0), flat.emission_factors);
    }
}
