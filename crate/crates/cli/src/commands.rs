//! One function per subcommand.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use airtraffic_core::calibration::checkpoint::Checkpoint;
use airtraffic_core::calibration::{batch_fit, CalibState};
use airtraffic_core::config::Config;
use airtraffic_core::estimator::EstimatorModel;
use airtraffic_core::pipeline::{self, estimate_baselines, prepare, run_pipeline, training_pairs, truth_map};
use airtraffic_core::simulator::run_scenario;
use airtraffic_core::GasSpecies;
use airtraffic_gateway::client::send_lines;
use airtraffic_gateway::wire::quantize;
use airtraffic_gateway::{Disposition, Gateway, Server};
use anyhow::{bail, Context, Result};

use crate::files;
use crate::manifest::{self, Entry};
use crate::report;

fn load_config(path: Option<&Path>) -> Result<Config> {
    Ok(match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    })
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))
}

pub fn simulate(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let started = manifest::now();
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.scenario.rng_seed = s;
    }
    let sim = run_scenario(&cfg.scenario)?;
    prepare_out(out)?;
    let records: Vec<_> = sim.records.iter().map(quantize).collect();
    let paths = [
        ("records_log", out.join("records.log")),
        ("records_csv", out.join("records.csv")),
        ("truth_csv", out.join("truth.csv")),
        ("concentration_csv", out.join("true_concentration.csv")),
        ("config", out.join("config.toml")),
    ];
    files::write_records_log(&paths[0].1, &records)?;
    files::write_records_csv(&paths[1].1, &records)?;
    files::write_truth_csv(&paths[2].1, &sim.truth)?;
    files::write_true_concentration_csv(&paths[3].1, &sim.truth, &sim.true_concentration)?;
    fs::write(&paths[4].1, cfg.to_toml())?;

    let mean = sim.mean_true_concentration();
    println!(
        "{} minutes, {} nodes, {} records; mean concentration CO {:.4} SO2 {:.6} HC {:.4} SOOT {:.5}",
        sim.truth.len(),
        cfg.scenario.sensors.len(),
        records.len(),
        mean[GasSpecies::Co],
        mean[GasSpecies::So2],
        mean[GasSpecies::Hc],
        mean[GasSpecies::Soot]
    );
    let mut entry = Entry::new("simulate", started);
    entry.config = config.map(Path::to_path_buf);
    entry.seed = Some(cfg.scenario.rng_seed);
    entry.outputs.extend(paths);
    entry.append(out)
}

pub fn serve(listen: SocketAddr, log: &Path) -> Result<()> {
    let gateway = Arc::new(Gateway::open(log)?);
    let server = Server::bind(listen, gateway).with_context(|| format!("cannot listen on {listen}"))?;
    eprintln!("listening on {}, appending to {}", server.local_addr()?, log.display());
    server.run()?;
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<Vec<u8>>> {
    let f = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut lines = Vec::new();
    for line in BufReader::new(f).split(b'\n') {
        let mut line = line?;
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        line.push(b'\n');
        lines.push(line);
    }
    Ok(lines)
}

pub fn replay(input: &Path, listen: Option<SocketAddr>, log: Option<&Path>) -> Result<()> {
    let lines = read_lines(input)?;
    let dispositions = match (listen, log) {
        (Some(addr), _) => send_lines(addr, &lines).with_context(|| format!("sending to {addr}"))?,
        (None, Some(log)) => Gateway::open(log)?.ingest_lines(&lines)?,
        (None, None) => bail!("either --listen or --log is required"),
    };
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for d in &dispositions {
        *counts.entry(d.to_string()).or_default() += 1;
    }
    for (k, n) in &counts {
        println!("{k:<32} {n}");
    }
    if dispositions.len() < lines.len() {
        bail!("STORAGE_FAILURE: gateway acknowledged {} of {} lines", dispositions.len(), lines.len());
    }
    if dispositions.contains(&Disposition::Rejected(airtraffic_gateway::RejectCode::StorageFailure)) {
        bail!("STORAGE_FAILURE reported by the gateway");
    }
    Ok(())
}

pub fn calibrate(config: Option<&Path>, records: &Path, truth: &Path, resume: Option<&Path>, out: &Path) -> Result<()> {
    let started = manifest::now();
    let cfg = load_config(config)?;
    let recs = files::read_records(records)?;
    let truth_rows = files::read_truth_csv(truth)?;
    let prepared = prepare(&recs, &cfg.qc);
    let range = prepared.minute_range().context("EMPTY_INPUT: no usable records")?;
    let truth_by_minute = truth_map(&truth_rows);

    let (mut state, params, mut baselines) = match resume {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            let cp = Checkpoint::from_text(&text).with_context(|| format!("{}", p.display()))?;
            (cp.state, cp.params, cp.baselines)
        }
        None => (CalibState::new(cfg.calibration.lambda, cfg.calibration.delta)?, cfg.estimator.params, BTreeMap::new()),
    };
    for (node, b) in estimate_baselines(&prepared, range.clone(), &cfg.baseline)? {
        baselines.entry(node).or_insert(b);
    }
    let pairs = training_pairs(&prepared, &truth_by_minute, range, &baselines, &params);
    if resume.is_none() {
        batch_fit(&pairs)?;
    }
    pipeline::calibrate(&mut state, &pairs);

    prepare_out(out)?;
    let cp_path = out.join("checkpoint.txt");
    fs::write(&cp_path, Checkpoint { state: state.clone(), params, baselines }.to_text())?;
    println!("{}", weights_line(&state));
    println!("updates {}  clamp events {}  breakdowns {}", state.n_updates(), state.clamp_events(), state.breakdowns());

    let mut entry = Entry::new("calibrate", started);
    entry.config = config.map(Path::to_path_buf);
    entry.inputs.insert("records", records.to_path_buf());
    entry.inputs.insert("truth", truth.to_path_buf());
    if let Some(p) = resume {
        entry.inputs.insert("resume", p.to_path_buf());
    }
    entry.outputs.insert("checkpoint", cp_path);
    entry.append(out)
}

fn weights_line(state: &CalibState<f64>) -> String {
    let w = state.weights();
    let parts: Vec<String> = GasSpecies::ALL.iter().map(|&g| format!("{}={:.6}", g.key(), w.get(g))).collect();
    format!("weights {}", parts.join(" "))
}

pub fn estimate(config: Option<&Path>, records: &Path, checkpoint: &Path, out: &Path) -> Result<()> {
    let started = manifest::now();
    let cfg = load_config(config)?;
    let text = fs::read_to_string(checkpoint).with_context(|| format!("cannot read {}", checkpoint.display()))?;
    let cp = Checkpoint::from_text(&text).with_context(|| format!("{}", checkpoint.display()))?;
    let recs = files::read_records(records)?;
    let prepared = prepare(&recs, &cfg.qc);
    let range = prepared.minute_range().context("EMPTY_INPUT: no usable records")?;
    let model = EstimatorModel {
        weights: cp.state.weights(),
        baselines: cp.baselines,
        params: cp.params,
        capacity_veh_per_min: cfg.scenario.capacity_veh_per_min,
        min_nodes: cfg.estimator.min_nodes,
    };
    let estimates = pipeline::estimate(&prepared, range, &model);
    prepare_out(out)?;
    let path = out.join("estimates.csv");
    files::write_estimates_csv(&path, &estimates)?;
    println!("{} minutes estimated", estimates.len());

    let mut entry = Entry::new("estimate", started);
    entry.config = config.map(Path::to_path_buf);
    entry.inputs.insert("records", records.to_path_buf());
    entry.inputs.insert("checkpoint", checkpoint.to_path_buf());
    entry.outputs.insert("estimates", path);
    entry.append(out)
}

pub fn pipeline(config: Option<&Path>, records: &Path, truth: &Path, split: f64, out: &Path) -> Result<()> {
    let started = manifest::now();
    if !(split > 0.0 && split < 1.0) {
        bail!("--split must lie strictly between 0 and 1, got {split}");
    }
    let cfg = load_config(config)?;
    let recs = files::read_records(records)?;
    let truth_rows = files::read_truth_csv(truth)?;
    let res = run_pipeline(&recs, &truth_rows, &cfg, split)?;

    prepare_out(out)?;
    let estimates_path = out.join("estimates.csv");
    let report_path = out.join("fit_report.csv");
    let cp_path = out.join("checkpoint.txt");
    files::write_estimates_csv(&estimates_path, &res.estimates)?;
    fs::write(&cp_path, res.checkpoint.to_text())?;

    let r = &res.report;
    let state = &res.checkpoint.state;
    let rows: Vec<(&str, String)> = vec![
        ("split", split.to_string()),
        ("train_minutes", (res.train.end - res.train.start).to_string()),
        ("holdout_minutes", (res.holdout.end - res.holdout.start).to_string()),
        ("records", recs.len().to_string()),
        ("records_rejected", res.n_rejected.to_string()),
        ("rls_updates", state.n_updates().to_string()),
        ("clamp_events", state.clamp_events().to_string()),
        ("breakdowns", state.breakdowns().to_string()),
        ("weight_co", state.weights().get(GasSpecies::Co).to_string()),
        ("weight_so2", state.weights().get(GasSpecies::So2).to_string()),
        ("weight_hc", state.weights().get(GasSpecies::Hc).to_string()),
        ("weight_soot", state.weights().get(GasSpecies::Soot).to_string()),
        ("n", r.n.to_string()),
        ("mae", r.mae.to_string()),
        ("rmse", r.rmse.to_string()),
        ("pearson_r", r.pearson_r.map(|v| v.to_string()).unwrap_or_default()),
        ("mean_truth", r.mean_truth.to_string()),
        ("mae_over_mean", (r.mae / r.mean_truth).to_string()),
    ];
    let mut w = csv::Writer::from_writer(files::create(&report_path)?);
    w.write_record(["metric", "value"])?;
    for (k, v) in &rows {
        w.write_record([k, v.as_str()])?;
    }
    w.flush()?;
    drop(w);
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in &rows {
        let v = v.parse::<f64>().ok().filter(|x| x.fract() != 0.0).map_or_else(|| v.clone(), |x| format!("{x:.6}"));
        println!("{k:<width$}  {v:>16}");
    }

    let mut entry = Entry::new("pipeline", started);
    entry.config = config.map(Path::to_path_buf);
    entry.seed = Some(cfg.scenario.rng_seed);
    entry.inputs.insert("records", records.to_path_buf());
    entry.inputs.insert("truth", truth.to_path_buf());
    entry.outputs.insert("estimates", estimates_path);
    entry.outputs.insert("fit_report", report_path);
    entry.outputs.insert("checkpoint", cp_path);
    entry.append(out)
}

pub fn report(estimates: &Path, out: &Path) -> Result<()> {
    let started = manifest::now();
    let rows = files::read_estimates_csv(estimates)?;
    let summary = report::summarize(&rows)?;
    prepare_out(out)?;
    let hourly: PathBuf = out.join("hourly.csv");
    let daily: PathBuf = out.join("daily.csv");
    report::write_hourly_csv(&hourly, &summary)?;
    report::write_daily_csv(&daily, &summary)?;
    print!("{}", report::render(&summary));

    let mut entry = Entry::new("report", started);
    entry.inputs.insert("estimates", estimates.to_path_buf());
    entry.outputs.insert("hourly", hourly);
    entry.outputs.insert("daily", daily);
    entry.append(out)
}
