//! The append-only record log and the in-memory index rebuilt from it.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard};

use airtraffic_core::types::SensorRecord;
use thiserror::Error;

use crate::registry::{Disposition, NodeRegistry, RejectCode};
use crate::wire::{decode_record, encode_record, quantize};

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("STORAGE_FAILURE: {0}")]
    Io(#[from] io::Error),
    #[error("STORAGE_FAILURE: log line {line} is not a valid record: {msg}")]
    Corrupt { line: usize, msg: String },
    #[error("STORAGE_FAILURE: log line {line} repeats or reorders node {node} seq {seq}")]
    Inconsistent { line: usize, node: String, seq: u64 },
}

struct Inner {
    log: BufWriter<File>,
    registry: NodeRegistry,
    records: Vec<SensorRecord<f64>>,
    bytes: u64,
    /// Set after a failed write; the log may hold a partial line.
    poisoned: bool,
}

/// Serialized appender over one log file. All methods take `&self` and are
/// safe to call from many connection threads.
pub struct Gateway {
    path: PathBuf,
    inner: Mutex<Inner>,
}

impl Gateway {
    /// Opens or creates the log, rebuilding the registry and index from it.
    /// A trailing partial line (an interrupted append) is cut off.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StorageError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let mut registry = NodeRegistry::new();
        let mut records = Vec::new();
        let mut good: u64 = 0;
        {
            let mut reader = BufReader::new(&mut file);
            let mut line = Vec::new();
            let mut n = 0;
            loop {
                line.clear();
                let read = reader.read_until(b'\n', &mut line)?;
                if read == 0 || line.last() != Some(&b'\n') {
                    break;
                }
                n += 1;
                let r = decode_record(&line).map_err(|e| StorageError::Corrupt { line: n, msg: e.to_string() })?;
                if registry.admit(&r) != Disposition::Accepted {
                    return Err(StorageError::Inconsistent { line: n, node: r.node_id, seq: r.seq });
                }
                records.push(r);
                good += read as u64;
            }
        }
        if file.metadata()?.len() != good {
            log::warn!("{}: dropping partial record after byte {good}", path.display());
            file.set_len(good)?;
        }
        file.seek(SeekFrom::End(0))?;
        Ok(Gateway {
            path,
            inner: Mutex::new(Inner { log: BufWriter::new(file), registry, records, bytes: good, poisoned: false }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Ingests raw lines in order and flushes once at the end.
    pub fn ingest_lines<L: AsRef<[u8]>>(&self, lines: &[L]) -> Result<Vec<Disposition>, StorageError> {
        let decoded: Vec<_> = lines.iter().map(|l| decode_record(l.as_ref())).collect();
        let mut inner = self.lock();
        let mut out = Vec::with_capacity(lines.len());
        for d in decoded {
            out.push(match d {
                Ok(r) => inner.append(&r)?,
                Err(e) => Disposition::Rejected(RejectCode::from(&e)),
            });
        }
        inner.flush()?;
        Ok(out)
    }

    /// Ingests already-decoded records (local replay); flushes once.
    pub fn ingest_records(&self, records: &[SensorRecord<f64>]) -> Result<Vec<Disposition>, StorageError> {
        let mut inner = self.lock();
        let out = records.iter().map(|r| inner.append(r)).collect::<Result<Vec<_>, _>>()?;
        inner.flush()?;
        Ok(out)
    }

    pub fn ingest_line(&self, line: &[u8]) -> Result<Disposition, StorageError> {
        Ok(self.ingest_lines(&[line])?[0])
    }

    /// Accepted records with `start <= ts < end`, optionally for one node,
    /// ordered by `(ts, node, seq)`.
    pub fn query_window(&self, node: Option<&str>, start: i64, end: i64) -> Vec<SensorRecord<f64>> {
        assert!(start <= end, "query window must not be reversed");
        let mut out: Vec<_> = {
            let inner = self.lock();
            inner
                .records
                .iter()
                .filter(|r| (start..end).contains(&r.timestamp) && node.is_none_or(|n| n == r.node_id))
                .cloned()
                .collect()
        };
        out.sort_by(|a, b| (a.timestamp, &a.node_id, a.seq).cmp(&(b.timestamp, &b.node_id, b.seq)));
        out
    }

    /// Every accepted record in log order.
    pub fn records(&self) -> Vec<SensorRecord<f64>> {
        self.lock().records.clone()
    }

    pub fn registry(&self) -> NodeRegistry {
        self.lock().registry.clone()
    }

    pub fn len(&self) -> usize {
        self.lock().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Bytes of complete records in the log.
    pub fn log_bytes(&self) -> u64 {
        self.lock().bytes
    }

    pub fn flush(&self) -> Result<(), StorageError> {
        self.lock().flush()
    }
}

impl Inner {
    fn append(&mut self, r: &SensorRecord<f64>) -> Result<Disposition, StorageError> {
        if self.poisoned {
            return Err(StorageError::Io(io::Error::other("log is in a failed state")));
        }
        let d = self.registry.check(r);
        if d != Disposition::Accepted {
            return Ok(d);
        }
        let line = encode_record(r);
        if let Err(e) = self.log.write_all(&line) {
            self.poisoned = true;
            return Err(e.into());
        }
        self.registry.admit(r);
        self.records.push(quantize(r));
        self.bytes += line.len() as u64;
        Ok(d)
    }

    fn flush(&mut self) -> Result<(), StorageError> {
        self.log.flush().map_err(|e| {
            self.poisoned = true;
            e.into()
        })
    }
}

impl Drop for Gateway {
    fn drop(&mut self) {
        let _ = self.lock().log.flush();
    }
}
