//! Domain vocabulary shared by every stage: gas species, concentration
//! vectors, environmental conditions and the record types that flow through
//! the pipeline.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::Scalar;

/// Pollutants measured by a node. Carbon dioxide is not part of the set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GasSpecies {
    Co,
    So2,
    /// Unburned hydrocarbons.
    Hc,
    Soot,
}

impl GasSpecies {
    pub const ALL: [GasSpecies; 4] = [GasSpecies::Co, GasSpecies::So2, GasSpecies::Hc, GasSpecies::Soot];

    pub fn index(self) -> usize {
        match self {
            GasSpecies::Co => 0,
            GasSpecies::So2 => 1,
            GasSpecies::Hc => 2,
            GasSpecies::Soot => 3,
        }
    }

    /// Lower-case key used in configuration, CSV headers and the wire format.
    pub fn key(self) -> &'static str {
        match self {
            GasSpecies::Co => "co",
            GasSpecies::So2 => "so2",
            GasSpecies::Hc => "hc",
            GasSpecies::Soot => "soot",
        }
    }

    /// ppm for the gases, mg/m³ for soot.
    pub fn unit(self) -> &'static str {
        match self {
            GasSpecies::Soot => "mg/m3",
            _ => "ppm",
        }
    }
}

impl fmt::Display for GasSpecies {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GasSpecies::Co => "CO",
            GasSpecies::So2 => "SO2",
            GasSpecies::Hc => "HC",
            GasSpecies::Soot => "SOOT",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("missing species {0}")]
    MissingSpecies(GasSpecies),
}

/// One value per [`GasSpecies`]. Every species is always present.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GasVector<T>([T; 4]);

impl<T: Copy> GasVector<T> {
    /// Values in [`GasSpecies::ALL`] order: CO, SO2, HC, soot.
    pub const fn new(values: [T; 4]) -> Self {
        GasVector(values)
    }

    pub fn splat(v: T) -> Self {
        GasVector([v; 4])
    }

    pub fn from_fn(mut f: impl FnMut(GasSpecies) -> T) -> Self {
        GasVector(GasSpecies::ALL.map(&mut f))
    }

    /// Builds from a species map; every species must be present.
    pub fn from_map(map: &BTreeMap<GasSpecies, T>) -> Result<Self, TypeError> {
        let mut out = [None; 4];
        for g in GasSpecies::ALL {
            out[g.index()] = Some(*map.get(&g).ok_or(TypeError::MissingSpecies(g))?);
        }
        Ok(GasVector(out.map(|v| v.expect("filled above"))))
    }

    pub fn get(&self, g: GasSpecies) -> T {
        self.0[g.index()]
    }

    pub fn as_array(&self) -> &[T; 4] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = (GasSpecies, T)> + '_ {
        GasSpecies::ALL.into_iter().map(move |g| (g, self.0[g.index()]))
    }

    pub fn map<U: Copy>(&self, mut f: impl FnMut(GasSpecies, T) -> U) -> GasVector<U> {
        GasVector::from_fn(|g| f(g, self.get(g)))
    }

    pub fn zip_map<U: Copy, V: Copy>(
        &self,
        other: &GasVector<U>,
        mut f: impl FnMut(GasSpecies, T, U) -> V,
    ) -> GasVector<V> {
        GasVector::from_fn(|g| f(g, self.get(g), other.get(g)))
    }
}

impl<T: Scalar> GasVector<T> {
    pub fn zeros() -> Self {
        Self::splat(T::zero())
    }

    pub fn dot(&self, other: &Self) -> T {
        self.0.iter().zip(other.0.iter()).map(|(&a, &b)| a * b).sum()
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|_, v| v * s)
    }

    pub fn sum(&self) -> T {
        self.0.iter().copied().sum()
    }

    pub fn cast<U: Scalar>(&self) -> GasVector<U> {
        self.map(|_, v| U::lit(v.as_f64()))
    }
}

impl<T> Index<GasSpecies> for GasVector<T> {
    type Output = T;
    fn index(&self, g: GasSpecies) -> &T {
        &self.0[g.index()]
    }
}

impl<T> IndexMut<GasSpecies> for GasVector<T> {
    fn index_mut(&mut self, g: GasSpecies) -> &mut T {
        &mut self.0[g.index()]
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GasFields<T> {
    co: T,
    so2: T,
    hc: T,
    soot: T,
}

impl<T: Serialize + Copy> Serialize for GasVector<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let [co, so2, hc, soot] = self.0;
        GasFields { co, so2, hc, soot }.serialize(s)
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for GasVector<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let f = GasFields::<T>::deserialize(d)?;
        Ok(GasVector([f.co, f.so2, f.hc, f.soot]))
    }
}

/// Conditions measured alongside the gases.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnvConditions<T> {
    /// °C
    pub temperature: T,
    /// Percent, 0..=100.
    pub relative_humidity: T,
    /// m/s
    pub wind_speed: T,
}

/// Raw reading from one node as received over the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorRecord<T = f64> {
    pub node_id: String,
    pub seq: u64,
    /// Unix seconds.
    pub timestamp: i64,
    pub gases: GasVector<T>,
    pub env: EnvConditions<T>,
}

/// Unix minute bucket of a timestamp.
pub fn minute_of(timestamp: i64) -> i64 {
    timestamp.div_euclid(60)
}

impl<T> SensorRecord<T> {
    pub fn minute(&self) -> i64 {
        minute_of(self.timestamp)
    }
}

/// Per-minute mean of a node's accepted records.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSample<T = f64> {
    pub node_id: String,
    pub minute: i64,
    pub gases: GasVector<T>,
    pub env: EnvConditions<T>,
    pub sample_count: u32,
}

/// Counted traffic for one minute bucket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthCount<T = f64> {
    pub minute: i64,
    pub vehicles_per_min: T,
}

/// A broken record invariant. Violations are data, returned by
/// [`validate_record`], not errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NegativeConcentration(GasSpecies),
    NonFinite(&'static str),
    HumidityRange,
    TemperatureRange,
    NegativeWind,
    EmptyNodeId,
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Violation::NegativeConcentration(_) => "NEGATIVE_CONCENTRATION",
            Violation::NonFinite(_) => "NON_FINITE",
            Violation::HumidityRange => "HUMIDITY_RANGE",
            Violation::TemperatureRange => "TEMPERATURE_RANGE",
            Violation::NegativeWind => "NEGATIVE_WIND",
            Violation::EmptyNodeId => "EMPTY_NODE_ID",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NegativeConcentration(g) => write!(f, "{} ({g})", self.code()),
            Violation::NonFinite(field) => write!(f, "{} ({field})", self.code()),
            _ => f.write_str(self.code()),
        }
    }
}

pub const TEMPERATURE_RANGE_C: (f64, f64) = (-60.0, 60.0);

/// Every violated invariant of `r`; the record is valid iff the list is empty.
pub fn validate_record<T: Scalar>(r: &SensorRecord<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    if r.node_id.is_empty() {
        out.push(Violation::EmptyNodeId);
    }
    for (g, c) in r.gases.iter() {
        if !c.is_finite() {
            out.push(Violation::NonFinite(g.key()));
        } else if c < T::zero() {
            out.push(Violation::NegativeConcentration(g));
        }
    }
    out.extend(validate_env(&r.env));
    out
}

pub fn validate_env<T: Scalar>(env: &EnvConditions<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    let EnvConditions { temperature, relative_humidity, wind_speed } = *env;
    if !temperature.is_finite() {
        out.push(Violation::NonFinite("temp"));
    } else if temperature < T::lit(TEMPERATURE_RANGE_C.0) || temperature > T::lit(TEMPERATURE_RANGE_C.1) {
        out.push(Violation::TemperatureRange);
    }
    if !relative_humidity.is_finite() {
        out.push(Violation::NonFinite("rh"));
    } else if relative_humidity < T::zero() || relative_humidity > T::lit(100.0) {
        out.push(Violation::HumidityRange);
    }
    if !wind_speed.is_finite() {
        out.push(Violation::NonFinite("wind"));
    } else if wind_speed < T::zero() {
        out.push(Violation::NegativeWind);
    }
    out
}
