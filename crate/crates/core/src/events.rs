//! Append-only JSON Lines event log.
//!
//! One [`EventRecord`] per line, flushed as it is written. Sequence numbers
//! start at 1 and never skip within a file; a daemon reopening an existing log
//! continues from the last sequence number found there.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alarm::AlarmMode;
use crate::controller::Command;
use crate::port::{Level, Line};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Event {
    SensorRaw { sensor_id: String, line: Line, level: Level },
    AlarmTransition { from: AlarmMode, to: AlarmMode, episode: u64 },
    Alert { sensor_id: String, episode: u64 },
    Command { command: Command },
    DataWrite { value: u8 },
    PowerChange { powered: bool },
    Warning { message: String },
}

impl Event {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Event::SensorRaw { .. } => "SensorRaw",
            Event::AlarmTransition { .. } => "AlarmTransition",
            Event::Alert { .. } => "Alert",
            Event::Command { .. } => "Command",
            Event::DataWrite { .. } => "DataWrite",
            Event::PowerChange { .. } => "PowerChange",
            Event::Warning { .. } => "Warning",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub ts_ms: u64,
    #[serde(flatten)]
    pub event: Event,
}

impl EventRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("event records always serialize")
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("event log {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("event log {path} line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

pub fn parse_records(text: &str) -> Result<Vec<EventRecord>, (usize, String)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e.to_string())))
        .collect()
}

pub fn read_log(path: &Path) -> Result<Vec<EventRecord>, LogError> {
    let file = File::open(path).map_err(|source| LogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| LogError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| LogError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
    last_seq: u64,
}

impl EventLog {
    /// Open (or create) a log for appending, returning the records already in it.
    pub fn open(path: &Path) -> Result<(EventLog, Vec<EventRecord>), LogError> {
        let existing = if path.is_file() { read_log(path)? } else { Vec::new() };
        for (i, rec) in existing.iter().enumerate() {
            if rec.seq != i as u64 + 1 {
                return Err(LogError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("sequence gap: expected {}, found {}", i + 1, rec.seq),
                });
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| LogError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        let last_seq = existing.last().map_or(0, |r| r.seq);
        Ok((
            EventLog {
                path: path.to_path_buf(),
                file,
                last_seq,
            },
            existing,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    /// Append and flush one record.
    ///
    /// Panics if `rec.seq` does not directly follow the previous record.
    pub fn append(&mut self, rec: &EventRecord) -> Result<(), LogError> {
        assert_eq!(
            rec.seq,
            self.last_seq + 1,
            "event log sequence must be contiguous"
        );
        let mut line = rec.to_line();
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|source| LogError::Io {
                path: self.path.clone(),
                source,
            })?;
        self.last_seq = rec.seq;
        Ok(())
    }
}
