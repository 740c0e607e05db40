//! Synthetic street for closed-loop testing: diurnal traffic drives a
//! well-mixed box model, and each roadside node observes the box through its
//! own imperfect sensor.

pub mod dispersion;
pub mod faults;
pub mod profile;
pub mod scenario;
pub mod sensor;

pub use dispersion::{emission_step, BoxModel};
pub use profile::{DiurnalProfile, Schedule};
pub use scenario::{run_scenario, ScenarioConfig, ScenarioOutput, SensorSpec, TrafficNoise, VehicleClass, Weather};
pub use sensor::{sensor_observe, SensorParams, SensorState};
