//! Line encoding of [`SensorRecord`]s.

use airtraffic_core::types::{validate_record, EnvConditions, GasVector, SensorRecord, Violation};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PROTOCOL_VERSION: u64 = 1;
/// Significant digits kept for concentrations on the wire.
pub const CONCENTRATION_DIGITS: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("MALFORMED: {0}")]
    Malformed(String),
    #[error("UNSUPPORTED_VERSION: {0}")]
    UnsupportedVersion(String),
    #[error("INVALID_FIELD: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "))]
    InvalidField(Vec<Violation>),
}

impl DecodeError {
    pub fn code(&self) -> &'static str {
        match self {
            DecodeError::Malformed(_) => "MALFORMED",
            DecodeError::UnsupportedVersion(_) => "UNSUPPORTED_VERSION",
            DecodeError::InvalidField(_) => "INVALID_FIELD",
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireRecord {
    v: u64,
    node: String,
    seq: u64,
    ts: i64,
    gas: GasVector<f64>,
    temp: f64,
    rh: f64,
    wind: f64,
}

/// Rounds `x` to `CONCENTRATION_DIGITS` significant digits.
pub fn round_significant(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", CONCENTRATION_DIGITS - 1, x).parse().expect("formatted float parses")
}

/// The record exactly as it reads back after a trip over the wire.
pub fn quantize(r: &SensorRecord<f64>) -> SensorRecord<f64> {
    SensorRecord { gases: r.gases.map(|_, c| round_significant(c)), ..r.clone() }
}

/// One newline-terminated line. Floats use the shortest decimal that reads
/// back to the same value, after concentrations are rounded.
pub fn encode_record(r: &SensorRecord<f64>) -> Vec<u8> {
    let wire = WireRecord {
        v: PROTOCOL_VERSION,
        node: r.node_id.clone(),
        seq: r.seq,
        ts: r.timestamp,
        gas: r.gases.map(|_, c| round_significant(c)),
        temp: r.env.temperature,
        rh: r.env.relative_humidity,
        wind: r.env.wind_speed,
    };
    let mut line = serde_json::to_vec(&wire).expect("finite record serializes");
    line.push(b'\n');
    line
}

/// Parses and validates one line; a trailing newline is optional.
pub fn decode_record(line: &[u8]) -> Result<SensorRecord<f64>, DecodeError> {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    let line = line.strip_suffix(b"\r").unwrap_or(line);
    let value: serde_json::Value = serde_json::from_slice(line).map_err(|e| DecodeError::Malformed(e.to_string()))?;
    match value.get("v") {
        Some(v) if v.as_u64() == Some(PROTOCOL_VERSION) => {}
        Some(v) => return Err(DecodeError::UnsupportedVersion(v.to_string())),
        None => return Err(DecodeError::Malformed("missing field `v`".into())),
    }
    let w: WireRecord = serde_json::from_value(value).map_err(|e| DecodeError::Malformed(e.to_string()))?;
    let r = SensorRecord {
        node_id: w.node,
        seq: w.seq,
        timestamp: w.ts,
        gases: w.gas,
        env: EnvConditions { temperature: w.temp, relative_humidity: w.rh, wind_speed: w.wind },
    };
    let violations = validate_record(&r);
    if !violations.is_empty() {
        return Err(DecodeError::InvalidField(violations));
    }
    Ok(r)
}
