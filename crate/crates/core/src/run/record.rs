//! Persisted raw model output.
//!
//! A run record is JSON lines: one `header` line followed by one `entry`
//! line per inferred sentence, appended as results arrive. When a key
//! appears more than once (a failed sentence retried on resume) the last
//! entry wins.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::SentenceKey;

use super::{RunConfig, RunError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub harness_version: String,
    pub config: RunConfig,
    pub config_digest: String,
    pub template_digest: String,
    pub definitions_digest: String,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub input_key: SentenceKey,
    pub prompt_hash: String,
    pub example_keys: Vec<SentenceKey>,
    /// `None` when inference failed; see `error`.
    pub raw_response: Option<String>,
    pub latency_ms: u64,
    pub attempt_count: u32,
    pub timestamp: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RecordEntry {
    pub fn succeeded(&self) -> bool {
        self.raw_response.is_some()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RecordLine {
    Header(Box<RunHeader>),
    Entry(RecordEntry),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub header: RunHeader,
    pub entries: BTreeMap<SentenceKey, RecordEntry>,
}

impl RunRecord {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| RunError::io(path, e))?;
        let mut header = None;
        let mut entries = BTreeMap::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| RunError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: RecordLine = serde_json::from_str(&line).map_err(|source| RunError::Json {
                path: path.display().to_string(),
                line: n + 1,
                source,
            })?;
            match parsed {
                RecordLine::Header(h) if header.is_none() && n == 0 => header = Some(*h),
                RecordLine::Header(_) => {
                    return Err(RunError::Record(format!(
                        "{}: line {}: unexpected header",
                        path.display(),
                        n + 1
                    )))
                }
                RecordLine::Entry(e) => {
                    entries.insert(e.input_key.clone(), e);
                }
            }
        }
        let header = header.ok_or_else(|| RunError::Record(format!("{}: missing header line", path.display())))?;
        Ok(Self { header, entries })
    }

    pub fn failures(&self) -> impl Iterator<Item = &RecordEntry> {
        self.entries.values().filter(|e| !e.succeeded())
    }
}

/// Append-only writer for a run record file.
pub struct RecordWriter {
    out: BufWriter<File>,
}

impl RecordWriter {
    pub fn create(path: &Path, header: &RunHeader) -> Result<Self, RunError> {
        let file = File::create(path).map_err(|e| RunError::io(path, e))?;
        let mut writer = Self {
            out: BufWriter::new(file),
        };
        writer.write_line(&RecordLine::Header(Box::new(header.clone())), path)?;
        Ok(writer)
    }

    pub fn append(path: &Path) -> Result<Self, RunError> {
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| RunError::io(path, e))?;
        Ok(Self {
            out: BufWriter::new(file),
        })
    }

    fn write_line(&mut self, line: &RecordLine, path: &Path) -> Result<(), RunError> {
        serde_json::to_writer(&mut self.out, line).map_err(|source| RunError::Json {
            path: path.display().to_string(),
            line: 0,
            source,
        })?;
        self.out.write_all(b"\n").map_err(|e| RunError::io(path, e))?;
        self.out.flush().map_err(|e| RunError::io(path, e))
    }

    pub fn write_entry(&mut self, entry: &RecordEntry, path: &Path) -> Result<(), RunError> {
        self.write_line(&RecordLine::Entry(entry.clone()), path)
    }
}
