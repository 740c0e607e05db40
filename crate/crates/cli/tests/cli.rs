use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn airtraffic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_airtraffic")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = airtraffic(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, seed: &str) {
    ok(&["simulate", "--out", p(dir), "--seed", seed]);
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate(&a, "7");
    simulate(&b, "7");
    for name in ["records.log", "records.csv", "truth.csv", "true_concentration.csv", "config.toml"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs");
    }
    let truth = fs::read_to_string(a.join("truth.csv")).unwrap();
    assert_eq!(truth.lines().count(), 1 + 1440);
    let manifest = fs::read_to_string(a.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 1);
    assert!(manifest.contains("\"stage\":\"simulate\""));

    let c = tmp.path().join("c");
    simulate(&c, "8");
    assert_ne!(fs::read(a.join("records.log")).unwrap(), fs::read(c.join("records.log")).unwrap());
}

#[test]
fn bad_config_key_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[scenario]\nduration_days = 1\nstreet_volumme = 3.0\n").unwrap();
    let out = airtraffic(&["simulate", "--config", p(&cfg), "--out", p(&tmp.path().join("o"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("CONFIG_INVALID") && err.contains("scenario.street_volumme"), "{err}");

    fs::write(&cfg, "[calibration]\nlambda = 1.5\n").unwrap();
    let out = airtraffic(&["simulate", "--config", p(&cfg), "--out", p(&tmp.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("calibration.lambda"));
}

#[test]
fn full_split_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, "1");
    for split in ["1.0", "0"] {
        let out = airtraffic(&[
            "pipeline",
            "--records",
            p(&data.join("records.log")),
            "--truth",
            p(&data.join("truth.csv")),
            "--split",
            split,
            "--out",
            p(&tmp.path().join("run")),
        ]);
        assert!(!out.status.success());
        assert!(String::from_utf8_lossy(&out.stderr).contains("split"));
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn empty_estimates_are_reported_as_empty_input() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("estimates.csv");
    fs::write(&csv, "").unwrap();
    let out = airtraffic(&["report", p(&csv), "--out", p(&tmp.path().join("r"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("EMPTY_INPUT"));
}

#[test]
fn calibrate_estimate_report_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, "3");
    let records = data.join("records.log");
    let truth = data.join("truth.csv");
    let cal = tmp.path().join("cal");
    ok(&["calibrate", "--records", p(&records), "--truth", p(&truth), "--out", p(&cal)]);
    let checkpoint = cal.join("checkpoint.txt");
    assert!(checkpoint.exists());

    // Resuming over the same data keeps going from the saved state.
    let cal2 = tmp.path().join("cal2");
    ok(&["calibrate", "--records", p(&records), "--truth", p(&truth), "--resume", p(&checkpoint), "--out", p(&cal2)]);
    assert_ne!(fs::read(&checkpoint).unwrap(), fs::read(cal2.join("checkpoint.txt")).unwrap());

    let est = tmp.path().join("est");
    ok(&["estimate", "--records", p(&records), "--checkpoint", p(&checkpoint), "--out", p(&est)]);
    let estimates = fs::read_to_string(est.join("estimates.csv")).unwrap();
    assert!(estimates.starts_with("minute,vehicles_per_min,congestion_index,n_nodes_used"));
    assert_eq!(estimates.lines().count(), 1 + 1440);

    let rep = tmp.path().join("rep");
    let out = ok(&["report", p(&est.join("estimates.csv")), "--out", p(&rep)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("quietest hour"));
    assert_eq!(fs::read_to_string(rep.join("hourly.csv")).unwrap().lines().count(), 1 + 24);
    assert!(rep.join("daily.csv").exists());

    // Re-running a stage reproduces its outputs byte for byte.
    let est2 = tmp.path().join("est2");
    ok(&["estimate", "--records", p(&records), "--checkpoint", p(&checkpoint), "--out", p(&est2)]);
    assert_eq!(estimates, fs::read_to_string(est2.join("estimates.csv")).unwrap());
}

#[test]
fn pipeline_writes_estimates_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, "5");
    let run = tmp.path().join("run");
    let out = ok(&[
        "pipeline",
        "--records",
        p(&data.join("records.log")),
        "--truth",
        p(&data.join("truth.csv")),
        "--out",
        p(&run),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("pearson_r"), "{stdout}");
    let report = fs::read_to_string(run.join("fit_report.csv")).unwrap();
    assert!(report.starts_with("metric,value"));
    assert!(run.join("estimates.csv").exists() && run.join("checkpoint.txt").exists());
    assert!(fs::read_to_string(run.join("manifest.jsonl")).unwrap().contains("\"stage\":\"pipeline\""));
}

#[test]
fn replay_into_a_local_log_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, "2");
    let log = tmp.path().join("gateway.log");
    ok(&["replay", p(&data.join("records.log")), "--log", p(&log)]);
    let first = fs::read(&log).unwrap();
    assert_eq!(first, fs::read(data.join("records.log")).unwrap());
    ok(&["replay", p(&data.join("records.log")), "--log", p(&log)]);
    assert_eq!(first, fs::read(&log).unwrap());
}
