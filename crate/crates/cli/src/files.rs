//! Reading and writing the tool's data files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use airtraffic_core::estimator::TrafficEstimate;
use airtraffic_core::types::{GasSpecies, GasVector, GroundTruthCount, SensorRecord};
use airtraffic_gateway::{decode_record, encode_record};
use anyhow::{bail, Context, Result};

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

/// Records of a wire-format log, one per line.
pub fn read_records(path: &Path) -> Result<Vec<SensorRecord<f64>>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).split(b'\n').enumerate() {
        let line = line?;
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let r = decode_record(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        out.push(r);
    }
    Ok(out)
}

pub fn write_records_log(path: &Path, records: &[SensorRecord<f64>]) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        w.write_all(&encode_record(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records_csv(path: &Path, records: &[SensorRecord<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["node", "seq", "ts", "minute", "co", "so2", "hc", "soot", "temp", "rh", "wind"])?;
    for r in records {
        let mut row = vec![r.node_id.clone(), r.seq.to_string(), r.timestamp.to_string(), r.minute().to_string()];
        row.extend(r.gases.iter().map(|(_, c)| c.to_string()));
        row.extend([r.env.temperature, r.env.relative_humidity, r.env.wind_speed].map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_truth_csv(path: &Path, truth: &[GroundTruthCount<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["minute", "vehicles_per_min"])?;
    for t in truth {
        w.write_record([t.minute.to_string(), t.vehicles_per_min.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth_csv(path: &Path) -> Result<Vec<GroundTruthCount<f64>>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).with_context(|| format!("{}: no `{name}` column", path.display()));
    let (m, v) = (col("minute")?, col("vehicles_per_min")?);
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let ctx = || format!("{}: row {}", path.display(), i + 2);
        let minute: i64 = row.get(m).unwrap_or("").parse().with_context(ctx)?;
        let vehicles: f64 = row.get(v).unwrap_or("").parse().with_context(ctx)?;
        out.push(GroundTruthCount { minute, vehicles_per_min: vehicles });
    }
    Ok(out)
}

pub fn write_true_concentration_csv(path: &Path, truth: &[GroundTruthCount<f64>], conc: &[GasVector<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["minute", "co", "so2", "hc", "soot"])?;
    for (t, c) in truth.iter().zip(conc) {
        let mut row = vec![t.minute.to_string()];
        row.extend(c.iter().map(|(_, v)| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_estimates_csv(path: &Path, estimates: &[TrafficEstimate<f64>]) -> Result<()> {
    let nodes: Vec<String> = estimates
        .iter()
        .flat_map(|e| e.node_estimates.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header: Vec<String> = ["minute", "vehicles_per_min", "congestion_index", "n_nodes_used"].map(String::from).to_vec();
    header.extend(GasSpecies::ALL.map(|g| format!("contrib_{}", g.key())));
    header.extend(nodes.iter().map(|n| format!("node_{n}")));
    w.write_record(&header)?;
    for e in estimates {
        let mut row = vec![e.minute.to_string(), e.vehicles_per_min.to_string(), e.congestion_index.to_string(), e.n_nodes_used.to_string()];
        row.extend(e.contributions.iter().map(|(_, c)| c.to_string()));
        row.extend(nodes.iter().map(|n| e.node_estimates.get(n).map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub minute: i64,
    pub vehicles_per_min: f64,
    pub congestion_index: f64,
    pub contributions: GasVector<f64>,
}

pub fn read_estimates_csv(path: &Path) -> Result<Vec<EstimateRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    let headers = r.headers()?.clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let col = |name: &str| headers.iter().position(|h| h == name).with_context(|| format!("{}: no `{name}` column", path.display()));
    let minute = col("minute")?;
    let vehicles = col("vehicles_per_min")?;
    let index = col("congestion_index")?;
    let contrib: BTreeMap<GasSpecies, usize> =
        GasSpecies::ALL.into_iter().map(|g| col(&format!("contrib_{}", g.key())).map(|c| (g, c))).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let ctx = || format!("{}: row {}", path.display(), i + 2);
        let num = |c: usize| -> Result<f64> { row.get(c).unwrap_or("").parse::<f64>().with_context(ctx) };
        let contributions = GasVector::from_fn(|g| num(contrib[&g]).unwrap_or(f64::NAN));
        if contributions.iter().any(|(_, v)| v.is_nan()) {
            bail!("{}: bad contribution value", ctx());
        }
        out.push(EstimateRow {
            minute: row.get(minute).unwrap_or("").parse().with_context(ctx)?,
            vehicles_per_min: num(vehicles)?,
            congestion_index: num(index)?,
            contributions,
        });
    }
    Ok(out)
}
