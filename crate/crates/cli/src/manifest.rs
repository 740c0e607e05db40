//! Append-only run manifest: one JSON object per stage in `manifest.jsonl`.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{ensure, Context, Result};
use serde::Serialize;

pub const FILE_NAME: &str = "manifest.jsonl";

#[derive(Serialize)]
pub struct Entry {
    pub stage: &'static str,
    pub tool_version: &'static str,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub inputs: BTreeMap<&'static str, PathBuf>,
    pub outputs: BTreeMap<&'static str, PathBuf>,
    pub started_unix: f64,
    pub finished_unix: f64,
}

pub fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

impl Entry {
    pub fn new(stage: &'static str, started_unix: f64) -> Self {
        Entry {
            stage,
            tool_version: env!("CARGO_PKG_VERSION"),
            config: None,
            seed: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            started_unix,
            finished_unix: started_unix,
        }
    }

    /// Appends the entry to `<out_dir>/manifest.jsonl` after checking that
    /// every output it names exists.
    pub fn append(mut self, out_dir: &Path) -> Result<()> {
        for (name, path) in &self.outputs {
            ensure!(path.exists(), "stage output `{name}` missing: {}", path.display());
        }
        self.finished_unix = now();
        let path = out_dir.join(FILE_NAME);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .with_context(|| format!("cannot open {}", path.display()))?;
        let mut line = serde_json::to_vec(&self)?;
        line.push(b'\n');
        f.write_all(&line)?;
        Ok(())
    }
}
