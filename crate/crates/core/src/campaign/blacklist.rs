use std::collections::BTreeSet;
use std::fs::OpenOptions;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::workersim::Worker;
use crate::{seed, Error, Result};

const ASSIGN_SALT: u64 = 0x4153_5347;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlacklistEntry {
    pub worker: String,
    pub reason: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

/// Append-only record of workers barred from further assignments.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Blacklist {
    entries: Vec<BlacklistEntry>,
    listed: BTreeSet<String>,
}

impl Blacklist {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[BlacklistEntry] {
        &self.entries
    }

    pub fn contains(&self, worker: &str) -> bool {
        self.listed.contains(worker)
    }

    pub fn add(&mut self, entry: BlacklistEntry) {
        self.listed.insert(entry.worker.clone());
        self.entries.push(entry);
    }

    /// Reads a `worker,reason,timestamp` log.
    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut out = Self::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != 3 || rec[0].is_empty() {
                return Err(Error::Row {
                    line,
                    message: "expected worker,reason,timestamp".into(),
                });
            }
            let timestamp = rec[2].parse().map_err(|_| Error::Row {
                line,
                message: format!("bad timestamp `{}`", &rec[2]),
            })?;
            out.add(BlacklistEntry {
                worker: rec[0].to_string(),
                reason: rec[1].to_string(),
                timestamp,
            });
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::new());
        }
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }

    /// Appends one entry to the log at `path`, writing the header first when
    /// the file is new. Existing lines are never rewritten.
    pub fn append_to(path: &Path, entry: &BlacklistEntry) -> Result<()> {
        let fresh = !path.exists() || std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .has_headers(false)
            .from_writer(file);
        if fresh {
            w.write_record(["worker", "reason", "timestamp"])?;
        }
        w.write_record([entry.worker.as_str(), entry.reason.as_str(), &entry.timestamp.to_string()])?;
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["worker", "reason", "timestamp"])?;
        for e in &self.entries {
            w.write_record([e.worker.as_str(), e.reason.as_str(), &e.timestamp.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<blacklist>", e))?;
        Ok(())
    }

    /// Workers still allowed to take assignments, in pool order.
    pub fn eligible<'w>(&self, pool: &'w [Worker]) -> Vec<&'w Worker> {
        pool.iter().filter(|w| !self.contains(&w.id)).collect()
    }

    /// Deterministically assigns each of `tasks` to an eligible worker.
    pub fn assign(&self, pool: &[Worker], tasks: &[String], master_seed: u64) -> Result<Vec<(String, String)>> {
        let eligible = self.eligible(pool);
        if eligible.is_empty() {
            return Err(Error::TooFewWorkers {
                found: 0,
                required: 1,
            });
        }
        Ok(tasks
            .iter()
            .map(|t| {
                let h = seed::stream_seed(master_seed, &[ASSIGN_SALT, seed::hash_str(t)]);
                let w = eligible[(h % eligible.len() as u64) as usize];
                (t.clone(), w.id.clone())
            })
            .collect())
    }
}
