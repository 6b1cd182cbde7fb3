//! Append-only response journal: resumable runs replay completed items
//! instead of re-sending them.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::llmrun::{ResponseRecord, RunError};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JournalRecord {
    Record(Box<ResponseRecord>),
    /// Terminal marker: every record for `item_id` has been written.
    Done { item_id: String },
}

/// Journal state loaded from disk: records of finished items only. Records
/// written before an interrupted item's `Done` marker are superseded on the
/// rerun (deduplicated by item and attempt, last write wins).
#[derive(Debug, Default)]
pub struct JournalState {
    pub completed: HashSet<String>,
    pub records: Vec<ResponseRecord>,
}

pub fn load_journal(path: &Path) -> Result<JournalState, RunError> {
    let mut state = JournalState::default();
    if !path.exists() {
        return Ok(state);
    }
    let reader = BufReader::new(File::open(path)?);
    let mut by_key: HashMap<(String, usize), ResponseRecord> = HashMap::new();
    let mut order: Vec<(String, usize)> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JournalRecord = serde_json::from_str(&line)
            .map_err(|e| RunError::Format(format!("journal line {}: {e}", i + 1)))?;
        match record {
            JournalRecord::Record(r) => {
                let key = (r.item_id.clone(), r.attempt_index);
                if !by_key.contains_key(&key) {
                    order.push(key.clone());
                }
                by_key.insert(key, *r);
            }
            JournalRecord::Done { item_id } => {
                state.completed.insert(item_id);
            }
        }
    }
    for key in order {
        if state.completed.contains(&key.0) {
            if let Some(r) = by_key.remove(&key) {
                state.records.push(r);
            }
        }
    }
    Ok(state)
}

/// Serialized writer for one run. Each item's records are appended together
/// with a terminal marker and flushed, so an interrupted run never loses a
/// finished item.
pub struct JournalWriter {
    writer: BufWriter<File>,
}

impl JournalWriter {
    pub fn append_to(path: &Path) -> Result<JournalWriter, RunError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(JournalWriter { writer: BufWriter::new(file) })
    }

    pub fn write_item(&mut self, item_id: &str, records: &[ResponseRecord]) -> Result<(), RunError> {
        for r in records {
            let line = serde_json::to_string(&JournalRecord::Record(Box::new(r.clone())))
                .map_err(|e| RunError::Format(e.to_string()))?;
            writeln!(self.writer, "{line}")?;
        }
        let done = serde_json::to_string(&JournalRecord::Done { item_id: item_id.to_string() })
            .map_err(|e| RunError::Format(e.to_string()))?;
        writeln!(self.writer, "{done}")?;
        self.writer.flush()?;
        Ok(())
    }
}

/// Reads all response records from a journal file (completed items only).
pub fn read_responses(path: &Path) -> Result<Vec<ResponseRecord>, RunError> {
    Ok(load_journal(path)?.records)
}
