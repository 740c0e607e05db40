//! Electrochemical sensor model: first-order response lag, gain and offset
//! error, linear drift and white noise, floored at zero.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::types::GasVector;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct SensorParams<T: Scalar> {
    pub gain: T,
    pub offset: GasVector<T>,
    pub noise_sigma: GasVector<T>,
    pub drift_per_day: GasVector<T>,
    /// Response time constant, seconds.
    pub tau: T,
}

impl<T: Scalar> Default for SensorParams<T> {
    fn default() -> Self {
        SensorParams {
            gain: T::one(),
            offset: GasVector::zeros(),
            noise_sigma: GasVector::zeros(),
            drift_per_day: GasVector::zeros(),
            tau: T::lit(30.0),
        }
    }
}

impl<T: Scalar> SensorParams<T> {
    pub fn ideal() -> Self {
        SensorParams { tau: T::lit(1e-6), ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.tau > T::zero() && self.tau.is_finite()) {
            return Err("tau must be positive".into());
        }
        if !(self.gain > T::zero() && self.gain.is_finite()) {
            return Err("gain must be positive".into());
        }
        if self.noise_sigma.iter().any(|(_, s)| !(s >= T::zero() && s.is_finite())) {
            return Err("noise_sigma must be finite and >= 0".into());
        }
        if self.offset.iter().chain(self.drift_per_day.iter()).any(|(_, v)| !v.is_finite()) {
            return Err("offset and drift_per_day must be finite".into());
        }
        Ok(())
    }

    /// Output for lagged concentration `lagged` at `t` seconds after deployment.
    pub fn read<R: Rng + ?Sized>(&self, lagged: &GasVector<T>, t: T, rng: &mut R) -> GasVector<T> {
        let days = t / T::lit(86_400.0);
        GasVector::from_fn(|g| {
            let sigma = self.noise_sigma[g];
            let noise = if sigma > T::zero() { sigma * T::lit(rng.sample::<f64, _>(StandardNormal)) } else { T::zero() };
            (self.gain * lagged[g] + self.offset[g] + self.drift_per_day[g] * days + noise).max(T::zero())
        })
    }
}

/// Lag memory of one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorState<T> {
    pub lagged: GasVector<T>,
}

impl<T: Scalar> SensorState<T> {
    pub fn new(initial: GasVector<T>) -> Self {
        SensorState { lagged: initial }
    }

    /// Advances the lag by `dt` seconds of constant input `c`. Uses the exact
    /// discrete response `1 − exp(−dt/τ)`, which tends to `dt/τ` for small steps.
    pub fn advance(&mut self, c: &GasVector<T>, dt: T, tau: T) {
        let alpha = T::one() - (-dt / tau).exp();
        self.lagged = self.lagged.zip_map(c, |_, r, target| r + alpha * (target - r));
    }
}

/// Lag step followed by a reading.
pub fn sensor_observe<T: Scalar, R: Rng + ?Sized>(
    true_c: &GasVector<T>,
    state: &mut SensorState<T>,
    sp: &SensorParams<T>,
    t: T,
    dt: T,
    rng: &mut R,
) -> GasVector<T> {
    state.advance(true_c, dt, sp.tau);
    sp.read(&state.lagged, t, rng)
}
