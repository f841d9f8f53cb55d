use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    subcommand: String,
    config_hash: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct UnitRecord {
    unit: String,
    data: Value,
}

/// Append-only JSONL log of completed work units. The first line identifies
/// the campaign; each further line holds one unit's result.
pub struct Checkpoint {
    path: PathBuf,
    file: File,
    done: BTreeMap<String, Value>,
}

impl Checkpoint {
    /// Open the log at `path`. With `resume`, completed units of a matching
    /// campaign are loaded (a torn final line is dropped); otherwise any
    /// existing log is replaced.
    pub fn open(path: &Path, subcommand: &str, config_hash: &str, resume: bool) -> Result<Self> {
        let header = Header {
            subcommand: subcommand.to_string(),
            config_hash: config_hash.to_string(),
        };
        let mut done = BTreeMap::new();
        if resume && path.exists() {
            let lines: Vec<String> = BufReader::new(File::open(path)?)
                .lines()
                .collect::<std::io::Result<_>>()?;
            let mut lines = lines.iter();
            if let Some(first) = lines.next() {
                let found: Header = serde_json::from_str(first)
                    .map_err(|e| Error::Format(format!("bad checkpoint header: {e}")))?;
                if found.config_hash != header.config_hash || found.subcommand != header.subcommand {
                    return Err(Error::Config(format!(
                        "checkpoint {} belongs to another campaign ({} {})",
                        path.display(),
                        found.subcommand,
                        found.config_hash
                    )));
                }
                for line in lines {
                    match serde_json::from_str::<UnitRecord>(line) {
                        Ok(rec) => {
                            done.insert(rec.unit, rec.data);
                        }
                        Err(_) => break,
                    }
                }
            }
            // rewrite so that a torn line does not precede new records
            let mut file = File::create(path)?;
            writeln!(file, "{}", serde_json::to_string(&header).expect("header serialises"))?;
            for (unit, data) in &done {
                let rec = UnitRecord {
                    unit: unit.clone(),
                    data: data.clone(),
                };
                writeln!(file, "{}", serde_json::to_string(&rec).expect("record serialises"))?;
            }
            file.sync_data()?;
        } else {
            let mut file = File::create(path)?;
            writeln!(file, "{}", serde_json::to_string(&header).expect("header serialises"))?;
        }
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            done,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn completed(&self) -> usize {
        self.done.len()
    }

    pub fn get<T: DeserializeOwned>(&self, unit: &str) -> Result<Option<T>> {
        self.done
            .get(unit)
            .map(|v| {
                serde_json::from_value(v.clone())
                    .map_err(|e| Error::Format(format!("checkpoint unit {unit}: {e}")))
            })
            .transpose()
    }

    pub fn record<T: Serialize>(&mut self, unit: &str, data: &T) -> Result<()> {
        let data = serde_json::to_value(data).map_err(|e| Error::Format(e.to_string()))?;
        let rec = UnitRecord {
            unit: unit.to_string(),
            data: data.clone(),
        };
        writeln!(self.file, "{}", serde_json::to_string(&rec).expect("record serialises"))?;
        self.file.flush()?;
        self.done.insert(unit.to_string(), data);
        Ok(())
    }
}

/// Why a run stopped before finishing all units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stop {
    /// The `--max-units` limit was reached.
    Interrupted,
    /// The configured wall-time budget ran out.
    WallTime,
}

/// Runs work units through a checkpoint, honouring the unit and wall-time limits.
pub struct UnitRunner {
    checkpoint: Checkpoint,
    max_units: Option<usize>,
    deadline: Option<Instant>,
    computed: usize,
    stopped: Option<Stop>,
}

impl UnitRunner {
    pub fn new(checkpoint: Checkpoint, max_units: Option<usize>, max_wall_seconds: Option<f64>) -> Self {
        let deadline = max_wall_seconds
            .filter(|s| s.is_finite() && *s >= 0.0)
            .map(|s| Instant::now() + std::time::Duration::from_secs_f64(s));
        Self {
            checkpoint,
            max_units,
            deadline,
            computed: 0,
            stopped: None,
        }
    }

    /// The unit's result, from the checkpoint or freshly computed. `None`
    /// once a limit has been hit; later calls then only return stored units.
    pub fn unit<T, F>(&mut self, key: &str, compute: F) -> Result<Option<T>>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T>,
    {
        if let Some(v) = self.checkpoint.get(key)? {
            return Ok(Some(v));
        }
        if self.stopped.is_some() {
            return Ok(None);
        }
        if self.max_units.is_some_and(|m| self.computed >= m) {
            self.stopped = Some(Stop::Interrupted);
            return Ok(None);
        }
        if self.deadline.is_some_and(|d| Instant::now() >= d) {
            self.stopped = Some(Stop::WallTime);
            return Ok(None);
        }
        let value = compute()?;
        self.checkpoint.record(key, &value)?;
        self.computed += 1;
        Ok(Some(value))
    }

    pub fn stopped(&self) -> Option<Stop> {
        self.stopped
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.checkpoint
    }
}
