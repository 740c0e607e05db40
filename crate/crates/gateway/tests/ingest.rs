use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Instant;

use airtraffic_core::simulator::{run_scenario, ScenarioConfig};
use airtraffic_core::types::{EnvConditions, GasVector, SensorRecord};
use airtraffic_gateway::client::send_lines;
use airtraffic_gateway::wire::{quantize, round_significant};
use airtraffic_gateway::{decode_record, encode_record, Disposition, Gateway, NodeRegistry, Server};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_record(rng: &mut ChaCha8Rng) -> SensorRecord<f64> {
    let mut conc = || {
        let mag = 10f64.powi(rng.random_range(-6..3));
        round_significant(rng.random_range(0.0..10.0) * mag)
    };
    let gases = GasVector::new([conc(), conc(), conc(), conc()]);
    SensorRecord {
        node_id: format!("node-{}", rng.random_range(0..50)),
        seq: rng.random_range(0..u64::MAX / 2),
        timestamp: rng.random_range(-10_000_000_000i64..10_000_000_000),
        gases,
        env: EnvConditions {
            temperature: rng.random_range(-60.0..60.0),
            relative_humidity: rng.random_range(0.0..=100.0),
            wind_speed: rng.random_range(0.0..40.0),
        },
    }
}

#[test]
fn ten_thousand_random_records_round_trip_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10_000 {
        let r = random_record(&mut rng);
        let line = encode_record(&r);
        assert_eq!(decode_record(&line).unwrap(), r);
        assert_eq!(encode_record(&r), line);
    }
}

proptest! {
    #[test]
    fn encoding_is_a_fixpoint_after_one_trip(
        gases in prop::array::uniform4(0.0..1e4f64),
        temp in -60.0..60.0f64, rh in 0.0..=100.0f64, wind in 0.0..50.0f64,
        seq in any::<u64>(), ts in any::<i64>(), node in "[a-z0-9._-]{1,12}",
    ) {
        let r = SensorRecord { node_id: node, seq, timestamp: ts, gases: GasVector::new(gases),
            env: EnvConditions { temperature: temp, relative_humidity: rh, wind_speed: wind } };
        let once = decode_record(&encode_record(&r)).unwrap();
        prop_assert_eq!(&once, &quantize(&r));
        prop_assert_eq!(encode_record(&once), encode_record(&r));
        for (g, c) in r.gases.iter() {
            prop_assert!((once.gases[g] - c).abs() <= 5e-6 * c.abs());
        }
    }
}

fn simulated_lines(days: u32) -> Vec<Vec<u8>> {
    let cfg = ScenarioConfig { duration_days: days, ..Default::default() };
    run_scenario(&cfg).unwrap().records.iter().map(encode_record).collect()
}

#[test]
fn replaying_the_stream_leaves_the_log_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.log");
    let lines = simulated_lines(1);
    let gw = Arc::new(Gateway::open(&path).unwrap());
    let server = Server::bind("127.0.0.1:0", Arc::clone(&gw)).unwrap().spawn().unwrap();
    let first = send_lines(server.local_addr(), &lines).unwrap();
    assert!(first.iter().all(|d| *d == Disposition::Accepted));
    let bytes = std::fs::read(&path).unwrap();
    let concatenated: Vec<u8> = lines.concat();
    assert_eq!(bytes, concatenated);

    let second = send_lines(server.local_addr(), &lines).unwrap();
    assert!(second.iter().all(|d| *d == Disposition::Duplicate));
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    server.shutdown().unwrap();
}

#[test]
fn registry_rebuilt_from_any_truncation_matches_incremental_state() {
    let dir = tempfile::tempdir().unwrap();
    let lines = simulated_lines(1);
    let records: Vec<_> = lines.iter().map(|l| decode_record(l).unwrap()).collect();
    let mut boundaries = vec![0usize];
    let mut offset = 0;
    for l in &lines {
        offset += l.len();
        boundaries.push(offset);
    }
    let full: Vec<u8> = lines.concat();
    // Every 97th boundary plus both ends keeps the test quick while covering
    // boundaries throughout the log.
    let picks: Vec<usize> = (0..boundaries.len()).filter(|i| i % 97 == 0 || *i == boundaries.len() - 1).collect();
    for k in picks {
        let path = dir.path().join(format!("cut-{k}.log"));
        std::fs::write(&path, &full[..boundaries[k]]).unwrap();
        let mut incremental = NodeRegistry::new();
        for r in &records[..k] {
            incremental.admit(r);
        }
        let gw = Gateway::open(&path).unwrap();
        assert_eq!(gw.registry(), incremental, "cut after {k} records");
        assert_eq!(gw.records(), records[..k]);
        // A torn write inside the next record is discarded too.
        if k < lines.len() {
            drop(gw);
            let mut torn = full[..boundaries[k]].to_vec();
            torn.extend_from_slice(&lines[k][..lines[k].len() / 2]);
            std::fs::write(&path, &torn).unwrap();
            assert_eq!(Gateway::open(&path).unwrap().registry(), incremental);
        }
    }
}

fn per_node(lines: &[Vec<u8>]) -> Vec<Vec<Vec<u8>>> {
    let mut nodes: Vec<(String, Vec<Vec<u8>>)> = Vec::new();
    for l in lines {
        let id = decode_record(l).unwrap().node_id;
        match nodes.iter_mut().find(|(n, _)| *n == id) {
            Some((_, v)) => v.push(l.clone()),
            None => nodes.push((id, vec![l.clone()])),
        }
    }
    nodes.into_iter().map(|(_, v)| v).collect()
}

fn eight_node_lines(days: u32) -> Vec<Vec<u8>> {
    let mut cfg = ScenarioConfig { duration_days: days, ..Default::default() };
    let template = cfg.sensors[0].clone();
    cfg.sensors = (1..=8).map(|i| airtraffic_core::simulator::SensorSpec { id: format!("n{i}"), ..template.clone() }).collect();
    run_scenario(&cfg).unwrap().records.iter().map(encode_record).collect()
}

#[test]
fn concurrent_ingest_accepts_the_same_set_as_sequential() {
    let dir = tempfile::tempdir().unwrap();
    let lines = eight_node_lines(1);
    let mut stream = lines.clone();
    // Sprinkle duplicates and stale records into the stream.
    stream.extend(lines.iter().step_by(50).cloned());

    let sequential = Gateway::open(dir.path().join("seq.log")).unwrap();
    sequential.ingest_lines(&stream).unwrap();

    let gw = Arc::new(Gateway::open(dir.path().join("conc.log")).unwrap());
    let server = Server::bind("127.0.0.1:0", Arc::clone(&gw)).unwrap().spawn().unwrap();
    let addr = server.local_addr();
    let mut groups = per_node(&lines);
    for (g, extra) in groups.iter_mut().zip(per_node(&stream[lines.len()..])) {
        g.extend(extra);
    }
    std::thread::scope(|s| {
        for g in &groups {
            s.spawn(move || send_lines(addr, g).unwrap());
        }
    });
    let set = |recs: Vec<SensorRecord<f64>>| recs.iter().map(encode_record).collect::<BTreeSet<_>>();
    assert_eq!(set(gw.records()), set(sequential.records()));
    assert_eq!(gw.len(), lines.len());
    server.shutdown().unwrap();
}

#[test]
fn sustains_ten_thousand_records_per_second_from_eight_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let lines = eight_node_lines(3);
    let groups = per_node(&lines);
    let gw = Arc::new(Gateway::open(dir.path().join("load.log")).unwrap());
    let server = Server::bind("127.0.0.1:0", Arc::clone(&gw)).unwrap().spawn().unwrap();
    let addr = server.local_addr();
    let start = Instant::now();
    std::thread::scope(|s| {
        for g in &groups {
            s.spawn(move || assert!(send_lines(addr, g).unwrap().iter().all(|d| *d == Disposition::Accepted)));
        }
    });
    let rate = lines.len() as f64 / start.elapsed().as_secs_f64();
    assert_eq!(gw.len(), lines.len());
    assert!(rate >= 10_000.0, "{rate:.0} records/s");
    server.shutdown().unwrap();
}
