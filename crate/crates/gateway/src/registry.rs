//! Per-node bookkeeping behind the exactly-once contract.

use std::collections::BTreeMap;
use std::fmt;

use airtraffic_core::types::SensorRecord;

use crate::wire::DecodeError;

/// How far, in seconds, a node's timestamp may step back between
/// consecutive accepted records.
pub const MAX_CLOCK_SKEW_S: i64 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectCode {
    Malformed,
    UnsupportedVersion,
    InvalidField,
    StaleSeq,
    ClockSkew,
    StorageFailure,
}

impl RejectCode {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectCode::Malformed => "MALFORMED",
            RejectCode::UnsupportedVersion => "UNSUPPORTED_VERSION",
            RejectCode::InvalidField => "INVALID_FIELD",
            RejectCode::StaleSeq => "STALE_SEQ",
            RejectCode::ClockSkew => "CLOCK_SKEW",
            RejectCode::StorageFailure => "STORAGE_FAILURE",
        }
    }
}

impl From<&DecodeError> for RejectCode {
    fn from(e: &DecodeError) -> Self {
        match e {
            DecodeError::Malformed(_) => RejectCode::Malformed,
            DecodeError::UnsupportedVersion(_) => RejectCode::UnsupportedVersion,
            DecodeError::InvalidField(_) => RejectCode::InvalidField,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Disposition {
    Accepted,
    Duplicate,
    Rejected(RejectCode),
}

impl fmt::Display for Disposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Disposition::Accepted => f.write_str("ACCEPTED"),
            Disposition::Duplicate => f.write_str("DUPLICATE"),
            Disposition::Rejected(code) => write!(f, "REJECTED {}", code.as_str()),
        }
    }
}

impl Disposition {
    /// Parses an acknowledgement line as written by [`fmt::Display`].
    pub fn parse(ack: &str) -> Option<Self> {
        let ack = ack.trim_end();
        match ack {
            "ACCEPTED" => Some(Disposition::Accepted),
            "DUPLICATE" => Some(Disposition::Duplicate),
            _ => {
                let code = ack.strip_prefix("REJECTED ")?;
                [
                    RejectCode::Malformed,
                    RejectCode::UnsupportedVersion,
                    RejectCode::InvalidField,
                    RejectCode::StaleSeq,
                    RejectCode::ClockSkew,
                    RejectCode::StorageFailure,
                ]
                .into_iter()
                .find(|c| c.as_str() == code)
                .map(Disposition::Rejected)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeState {
    pub last_seq: u64,
    pub last_ts: i64,
    pub record_count: u64,
    /// Accepted sequence numbers, ascending.
    accepted: Vec<u64>,
}

impl NodeState {
    pub fn has_seq(&self, seq: u64) -> bool {
        self.accepted.binary_search(&seq).is_ok()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeRegistry {
    nodes: BTreeMap<String, NodeState>,
}

impl NodeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, node: &str) -> Option<&NodeState> {
        self.nodes.get(node)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&str, &NodeState)> {
        self.nodes.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// What [`Self::admit`] would do with `r`, without changing anything.
    pub fn check(&self, r: &SensorRecord<f64>) -> Disposition {
        let Some(st) = self.nodes.get(&r.node_id) else { return Disposition::Accepted };
        if r.seq <= st.last_seq {
            return if st.has_seq(r.seq) { Disposition::Duplicate } else { Disposition::Rejected(RejectCode::StaleSeq) };
        }
        if r.timestamp < st.last_ts - MAX_CLOCK_SKEW_S {
            return Disposition::Rejected(RejectCode::ClockSkew);
        }
        Disposition::Accepted
    }

    /// Checks `r` and records it if accepted.
    pub fn admit(&mut self, r: &SensorRecord<f64>) -> Disposition {
        let d = self.check(r);
        if d == Disposition::Accepted {
            let st = self.nodes.entry(r.node_id.clone()).or_default();
            st.last_seq = r.seq;
            st.last_ts = if st.record_count == 0 { r.timestamp } else { st.last_ts.max(r.timestamp) };
            st.record_count += 1;
            st.accepted.push(r.seq);
        }
        d
    }

    pub fn total_records(&self) -> u64 {
        self.nodes.values().map(|s| s.record_count).sum()
    }
}
