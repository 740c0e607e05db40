//! Single well-mixed street box:
//!
//! ```text
//! dc/dt = E·n / V − (u/L + k_dep)·(c − c_ambient)
//! ```
//!
//! with `n` in vehicles/min, `E` the per-vehicle source strength
//! (concentration·m³/s per vehicle/min), `u` wind speed, `L` the exchange
//! length and `k_dep` deposition plus vertical exchange.

use crate::types::{EnvConditions, GasVector};
use crate::Scalar;

/// Largest explicit step accepted by [`BoxModel::step_with`].
pub const MAX_DT_SECONDS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxModel<T> {
    /// m³
    pub volume: T,
    /// m
    pub exchange_length: T,
    /// 1/s
    pub deposition_rate: T,
    pub ambient: GasVector<T>,
    /// Fleet-average source per vehicle/min.
    pub emission: GasVector<T>,
}

impl<T: Scalar> BoxModel<T> {
    /// First-order removal rate at `wind` m/s.
    pub fn removal_rate(&self, wind: T) -> T {
        wind / self.exchange_length + self.deposition_rate
    }

    /// One explicit Euler step of length `dt` seconds with the given per-vehicle
    /// emission; concentrations are floored at zero.
    ///
    /// # Panics
    /// If `dt` exceeds [`MAX_DT_SECONDS`].
    pub fn step_with(&self, c: &GasVector<T>, vehicles_per_min: T, emission: &GasVector<T>, wind: T, dt: T) -> GasVector<T> {
        assert!(dt <= T::lit(MAX_DT_SECONDS), "box model step {dt} s exceeds {MAX_DT_SECONDS} s");
        let k = self.removal_rate(wind);
        GasVector::from_fn(|g| {
            let source = emission[g] * vehicles_per_min / self.volume;
            (c[g] + dt * (source - k * (c[g] - self.ambient[g]))).max(T::zero())
        })
    }

    pub fn step(&self, c: &GasVector<T>, vehicles_per_min: T, env: &EnvConditions<T>, dt: T) -> GasVector<T> {
        self.step_with(c, vehicles_per_min, &self.emission, env.wind_speed, dt)
    }

    /// Analytic equilibrium for constant traffic and wind.
    pub fn steady_state_with(&self, vehicles_per_min: T, emission: &GasVector<T>, wind: T) -> GasVector<T> {
        let k = self.removal_rate(wind);
        GasVector::from_fn(|g| self.ambient[g] + emission[g] * vehicles_per_min / (self.volume * k))
    }

    pub fn steady_state(&self, vehicles_per_min: T, wind: T) -> GasVector<T> {
        self.steady_state_with(vehicles_per_min, &self.emission, wind)
    }
}

/// Free-function form of [`BoxModel::step`].
pub fn emission_step<T: Scalar>(c: &GasVector<T>, vehicles_per_min: T, env: &EnvConditions<T>, model: &BoxModel<T>, dt: T) -> GasVector<T> {
    model.step(c, vehicles_per_min, env, dt)
}
