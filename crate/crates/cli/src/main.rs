//! `airtraffic` command-line tool.

mod commands;
mod files;
mod manifest;
mod report;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "airtraffic", version, about = "Estimate street traffic from roadside pollutant sensors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a synthetic scenario and write records, truth and a manifest
    Simulate {
        /// TOML configuration; defaults apply to anything it leaves out
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario RNG seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Accept node connections and append records to a log
    Serve {
        #[arg(long, env = "AIRTRAFFIC_LISTEN", default_value = "127.0.0.1:7878")]
        listen: SocketAddr,
        #[arg(long, env = "AIRTRAFFIC_LOG")]
        log: PathBuf,
    },
    /// Send a record log to a running gateway, or ingest it into a local log
    Replay {
        /// Record log in wire format
        input: PathBuf,
        /// Gateway address to send to
        #[arg(long, conflicts_with = "log", required_unless_present = "log")]
        listen: Option<SocketAddr>,
        /// Local log to ingest into directly
        #[arg(long, env = "AIRTRAFFIC_LOG")]
        log: Option<PathBuf>,
    },
    /// Fit weights online against counted traffic and write a checkpoint
    Calibrate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Record log in wire format
        #[arg(long)]
        records: PathBuf,
        /// Truth CSV (minute,vehicles_per_min)
        #[arg(long)]
        truth: PathBuf,
        /// Continue from this checkpoint instead of starting fresh
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate vehicles/min for every minute of a record log
    Estimate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate on the first part of the data, estimate and score the rest
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Fraction of minutes used for calibration, strictly between 0 and 1
        #[arg(long, default_value_t = 0.5)]
        split: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarise an estimates CSV by hour of day
    Report {
        /// Estimates CSV written by `estimate` or `pipeline`
        estimates: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out, seed } => commands::simulate(config.as_deref(), &out, seed),
        Command::Serve { listen, log } => commands::serve(listen, &log),
        Command::Replay { input, listen, log } => commands::replay(&input, listen, log.as_deref()),
        Command::Calibrate { config, records, truth, resume, out } => {
            commands::calibrate(config.as_deref(), &records, &truth, resume.as_deref(), &out)
        }
        Command::Estimate { config, records, checkpoint, out } => {
            commands::estimate(config.as_deref(), &records, &checkpoint, &out)
        }
        Command::Pipeline { config, records, truth, split, out } => {
            commands::pipeline(config.as_deref(), &records, &truth, split, &out)
        }
        Command::Report { estimates, out } => commands::report(&estimates, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
