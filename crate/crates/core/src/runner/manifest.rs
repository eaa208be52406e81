//! Run manifest and the append-only status journal.
//!
//! The manifest snapshots the config, tool version, and schedule digest
//! and is written before the first backend call. Item status transitions
//! append to a separate journal file, one JSON line each, so restarts can
//! diff completed work without rewriting the manifest.

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::chat::WorkItem;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const JOURNAL_FILE: &str = "status.ndjson";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub tool_version: String,
    pub created_at: String,
    pub schedule_digest: String,
    pub item_ids: Vec<String>,
    pub config: RunConfig,
}

/// Digest over the ordered item ids; identifies a schedule exactly.
pub fn schedule_digest(items: &[WorkItem]) -> String {
    let mut hasher = Sha256::new();
    for item in items {
        hasher.update(item.item_id().as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(run_id: String, config: RunConfig, items: &[WorkItem]) -> Self {
        Self {
            run_id,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_at: chrono::Utc::now().to_rfc3339(),
            schedule_digest: schedule_digest(items),
            item_ids: items.iter().map(|i| i.item_id()).collect(),
            config,
        }
    }

    pub fn write(&self, run_dir: &Path) -> std::io::Result<()> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text)
    }

    pub fn read(run_dir: &Path) -> std::io::Result<Option<Self>> {
        let path = run_dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusEntry {
    pub item_id: String,
    pub status: ItemStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub timestamp: String,
}

/// Single-writer journal; workers funnel through one mutex-held file.
pub struct StatusJournal {
    path: PathBuf,
    file: Mutex<std::fs::File>,
}

impl StatusJournal {
    pub fn open_append(run_dir: &Path) -> std::io::Result<Self> {
        let path = run_dir.join(JOURNAL_FILE);
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)?;
        Ok(Self {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn record(
        &self,
        item_id: &str,
        status: ItemStatus,
        reason: Option<String>,
    ) -> std::io::Result<()> {
        let entry = StatusEntry {
            item_id: item_id.to_string(),
            status,
            reason,
            timestamp: chrono::Utc::now().to_rfc3339(),
        };
        let line = serde_json::to_string(&entry).expect("entry serializes");
        let mut file = self.file.lock().expect("journal lock");
        writeln!(file, "{line}")?;
        file.flush()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

pub fn read_journal(run_dir: &Path) -> std::io::Result<Vec<StatusEntry>> {
    let path = run_dir.join(JOURNAL_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path)?;
    let mut entries = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: StatusEntry = serde_json::from_str(line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Item ids whose latest journal entry is `Done`.
pub fn completed_items(entries: &[StatusEntry]) -> HashSet<String> {
    let mut done = HashSet::new();
    for entry in entries {
        match entry.status {
            ItemStatus::Done => {
                done.insert(entry.item_id.clone());
            }
            ItemStatus::Failed => {
                done.remove(&entry.item_id);
            }
        }
    }
    done
}
