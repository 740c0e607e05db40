//! Synthetic sensor faults for exercising quality control.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::types::{GasSpecies, SensorRecord};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FaultKind {
    /// Output pinned at `value` for the affected minutes.
    Stuck { value: f64 },
    /// One reading multiplied by `factor`.
    Spike { factor: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InjectedFault {
    pub node_id: String,
    pub gas: GasSpecies,
    /// Sequence numbers touched by the fault, inclusive.
    pub seqs: std::ops::RangeInclusive<u64>,
    pub kind: FaultKind,
}

impl InjectedFault {
    pub fn touches(&self, r: &SensorRecord<f64>) -> bool {
        r.node_id == self.node_id && self.seqs.contains(&r.seq)
    }
}

/// Pins `gas` of `node` at `value` for records with seq in `first_seq..first_seq+minutes`.
pub fn inject_stuck(records: &mut [SensorRecord<f64>], node: &str, gas: GasSpecies, first_seq: u64, minutes: u64, value: f64) -> InjectedFault {
    let seqs = first_seq..=first_seq + minutes - 1;
    for r in records.iter_mut().filter(|r| r.node_id == node && seqs.contains(&r.seq)) {
        r.gases[gas] = value;
    }
    InjectedFault { node_id: node.to_string(), gas, seqs, kind: FaultKind::Stuck { value } }
}

/// Multiplies one reading by `factor`.
pub fn inject_spike(records: &mut [SensorRecord<f64>], node: &str, gas: GasSpecies, seq: u64, factor: f64) -> InjectedFault {
    for r in records.iter_mut().filter(|r| r.node_id == node && r.seq == seq) {
        r.gases[gas] *= factor;
    }
    InjectedFault { node_id: node.to_string(), gas, seqs: seq..=seq, kind: FaultKind::Spike { factor } }
}

/// Injects `n_stuck` stuck runs of `stuck_minutes` and `n_spike` single-sample
/// spikes at random, non-overlapping places. Each fault keeps `margin` clean
/// minutes on both sides from any other fault on the same node.
pub fn inject_random(
    records: &mut [SensorRecord<f64>],
    n_stuck: usize,
    n_spike: usize,
    stuck_minutes: u64,
    spike_factor: f64,
    margin: u64,
    seed: u64,
) -> Vec<InjectedFault> {
    let nodes: Vec<String> = records.iter().map(|r| r.node_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let max_seq = records.iter().map(|r| r.seq).max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken: Vec<(usize, u64, u64)> = Vec::new();
    let mut faults = Vec::with_capacity(n_stuck + n_spike);
    let need = |len: u64| len + 2 * margin;
    assert!(!nodes.is_empty() && max_seq > need(stuck_minutes), "not enough records for fault injection");

    for i in 0..n_stuck + n_spike {
        let len = if i < n_stuck { stuck_minutes } else { 1 };
        for attempt in 0.. {
            assert!(attempt < 100_000, "could not place {} non-overlapping faults", n_stuck + n_spike);
            let node = rng.random_range(0..nodes.len());
            let start = rng.random_range(1 + margin..=max_seq - len - margin + 1);
            let (lo, hi) = (start - margin, start + len - 1 + margin);
            if taken.iter().any(|&(n, a, b)| n == node && lo <= b && a <= hi) {
                continue;
            }
            taken.push((node, lo, hi));
            let gas = GasSpecies::ALL[rng.random_range(0..4)];
            let fault = if i < n_stuck {
                let value = records
                    .iter()
                    .find(|r| r.node_id == nodes[node] && r.seq == start)
                    .map_or(1.0, |r| r.gases[gas]);
                inject_stuck(records, &nodes[node], gas, start, len, value)
            } else {
                inject_spike(records, &nodes[node], gas, start, spike_factor)
            };
            faults.push(fault);
            break;
        }
    }
    faults
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{EnvConditions, GasVector};

    fn records(nodes: &[&str], minutes: u64) -> Vec<SensorRecord<f64>> {
        let env = EnvConditions { temperature: 20.0, relative_humidity: 50.0, wind_speed: 1.0 };
        (1..=minutes)
            .flat_map(|seq| {
                nodes.iter().map(move |n| SensorRecord {
                    node_id: n.to_string(),
                    seq,
                    timestamp: 60 * seq as i64,
                    gases: GasVector::new([1.0 + seq as f64 * 1e-3, 0.01, 0.3, 0.05]),
                    env,
                })
            })
            .collect()
    }

    #[test]
    fn stuck_pins_only_target() {
        let mut rs = records(&["a", "b"], 30);
        let f = inject_stuck(&mut rs, "a", GasSpecies::Co, 5, 15, 1.0);
        let touched: Vec<_> = rs.iter().filter(|r| f.touches(r)).collect();
        assert_eq!(touched.len(), 15);
        assert!(touched.iter().all(|r| r.gases[GasSpecies::Co] == 1.0));
        assert!(rs.iter().filter(|r| r.node_id == "b").all(|r| r.gases[GasSpecies::Co] != 1.0));
    }

    #[test]
    fn random_faults_do_not_overlap() {
        let mut rs = records(&["a", "b", "c", "d"], 1440);
        let faults = inject_random(&mut rs, 20, 20, 15, 50.0, 8, 3);
        assert_eq!(faults.len(), 40);
        for (i, f) in faults.iter().enumerate() {
            for g in &faults[i + 1..] {
                let overlap = f.seqs.start() <= g.seqs.end() && g.seqs.start() <= f.seqs.end();
                assert!(f.node_id != g.node_id || !overlap);
            }
        }
        let again = inject_random(&mut records(&["a", "b", "c", "d"], 1440), 20, 20, 15, 50.0, 8, 3);
        assert_eq!(faults, again);
    }
}
