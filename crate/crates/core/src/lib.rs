//! Traffic congestion estimation from roadside pollutant sensors.
//!
//! Roadside nodes report CO, SO2, unburned hydrocarbon and soot concentrations
//! together with temperature, humidity and wind. This crate turns those
//! readings into a vehicles/min estimate for a street segment:
//!
//! * [`preprocess`] rejects implausible data, aggregates to per-minute samples,
//!   fills short gaps and estimates the ambient (non-traffic) baseline.
//! * [`estimator`] applies environment corrections, weights the excess
//!   concentrations and fuses the node array into one segment estimate.
//! * [`calibration`] keeps the per-gas weights up to date against counted
//!   traffic with forgetting recursive least squares, and provides a
//!   non-negative batch least squares fit used as its oracle.
//! * [`simulator`] generates synthetic streets (diurnal traffic, box-model
//!   dispersion, imperfect electrochemical sensors) for closed-loop testing.
//! * [`pipeline`] wires the stages together for the command-line tool.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common `f64` instantiation.

pub mod calibration;
pub mod config;
pub mod estimator;
mod linalg;
pub mod pipeline;
pub mod preprocess;
mod scalar;
pub mod simulator;
pub mod types;

pub use scalar::Scalar;
pub use types::{
    EnvConditions, GasSpecies, GasVector, GroundTruthCount, NodeSample, SensorRecord, Violation,
};

pub type GasVectorF32 = types::GasVector<f32>;
pub type GasVectorF64 = types::GasVector<f64>;
pub type EnvConditionsF64 = types::EnvConditions<f64>;
pub type SensorRecordF32 = types::SensorRecord<f32>;
pub type SensorRecordF64 = types::SensorRecord<f64>;
pub type NodeSampleF64 = types::NodeSample<f64>;
pub type WeightVectorF32 = estimator::WeightVector<f32>;
pub type WeightVectorF64 = estimator::WeightVector<f64>;
pub type CalibStateF32 = calibration::CalibState<f32>;
pub type CalibStateF64 = calibration::CalibState<f64>;
pub type TrafficEstimateF64 = estimator::TrafficEstimate<f64>;
pub type BaselineVectorF64 = preprocess::BaselineVector<f64>;
