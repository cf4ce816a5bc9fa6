//! The append-only project log and the storage backends behind it.
//!
//! Filesystem layout for one project:
//!
//! ```text
//! <root>/<project_id>/log.jsonl
//! <root>/<project_id>/artifacts/<artifact_id>/v<N>.md
//! ```
//!
//! `log.jsonl` holds one [`LogEvent`] per line. Version bodies are not inlined
//! in the log; each `create`/`apply` event carries the SHA-256 of the body it
//! produced, and the body lives in the matching `v<N>.md` snapshot.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Decision, StoreError, Verdict};
use crate::domain::{ArtifactKind, PhaseId, Role};
use crate::phase_engine::ProjectConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    ProjectCreated {
        project_id: String,
        config: ProjectConfig,
        ts: DateTime<Utc>,
    },
    Create {
        artifact_id: String,
        phase: PhaseId,
        kind: ArtifactKind,
        authored_by: Role,
        content_sha256: String,
        ts: DateTime<Utc>,
    },
    Propose {
        proposal_id: String,
        artifact_id: String,
        base_version: u32,
        diff: String,
        rationale: String,
        proposed_by: Role,
        ts: DateTime<Utc>,
    },
    Apply {
        proposal_id: String,
        artifact_id: String,
        decision: Decision,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        new_version: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        content_sha256: Option<String>,
        ts: DateTime<Utc>,
    },
    Approve {
        artifact_id: String,
        version: u32,
        role: Role,
        actor: String,
        verdict: Verdict,
        note: String,
        ts: DateTime<Utc>,
    },
    Advance {
        from: PhaseId,
        to: PhaseId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        idempotency_key: Option<String>,
        ts: DateTime<Utc>,
    },
    Revisit {
        from: PhaseId,
        to: PhaseId,
        /// `(artifact_id, version)` heads whose approval was invalidated.
        stale: Vec<(String, u32)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        idempotency_key: Option<String>,
        ts: DateTime<Utc>,
    },
}

impl LogEvent {
    pub fn timestamp(&self) -> DateTime<Utc> {
        match self {
            LogEvent::ProjectCreated { ts, .. }
            | LogEvent::Create { ts, .. }
            | LogEvent::Propose { ts, .. }
            | LogEvent::Apply { ts, .. }
            | LogEvent::Approve { ts, .. }
            | LogEvent::Advance { ts, .. }
            | LogEvent::Revisit { ts, .. } => *ts,
        }
    }
}

/// Where a project's log and snapshots live. Snapshots are written before the
/// log line that references them.
pub trait Backend: Send {
    fn append(&mut self, event: &LogEvent) -> Result<(), StoreError>;
    fn put_snapshot(&mut self, artifact_id: &str, version: u32, text: &str) -> Result<(), StoreError>;
    fn get_snapshot(&self, artifact_id: &str, version: u32) -> Result<Option<String>, StoreError>;
    fn events(&self) -> Result<Vec<LogEvent>, StoreError>;
}

#[derive(Debug, Default, Clone)]
pub struct MemoryBackend {
    events: Vec<LogEvent>,
    snapshots: BTreeMap<(String, u32), String>,
}

impl MemoryBackend {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Backend for MemoryBackend {
    fn append(&mut self, event: &LogEvent) -> Result<(), StoreError> {
        self.events.push(event.clone());
        Ok(())
    }

    fn put_snapshot(&mut self, artifact_id: &str, version: u32, text: &str) -> Result<(), StoreError> {
        self.snapshots.insert((artifact_id.to_string(), version), text.to_string());
        Ok(())
    }

    fn get_snapshot(&self, artifact_id: &str, version: u32) -> Result<Option<String>, StoreError> {
        Ok(self.snapshots.get(&(artifact_id.to_string(), version)).cloned())
    }

    fn events(&self) -> Result<Vec<LogEvent>, StoreError> {
        Ok(self.events.clone())
    }
}

#[derive(Debug)]
pub struct FsBackend {
    dir: PathBuf,
    log: File,
}

impl FsBackend {
    /// Open (creating if needed) the directory for one project.
    pub fn open(root: &Path, project_id: &str) -> Result<Self, StoreError> {
        let dir = root.join(project_id);
        fs::create_dir_all(dir.join("artifacts"))?;
        let log = OpenOptions::new().create(true).append(true).open(dir.join("log.jsonl"))?;
        Ok(Self { dir, log })
    }

    pub fn exists(root: &Path, project_id: &str) -> bool {
        root.join(project_id).join("log.jsonl").is_file()
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn snapshot_path(&self, artifact_id: &str, version: u32) -> PathBuf {
        self.dir.join("artifacts").join(artifact_id).join(format!("v{version}.md"))
    }
}

impl Backend for FsBackend {
    fn append(&mut self, event: &LogEvent) -> Result<(), StoreError> {
        let mut line = serde_json::to_string(event)?;
        line.push('\n');
        self.log.write_all(line.as_bytes())?;
        self.log.flush()?;
        Ok(())
    }

    fn put_snapshot(&mut self, artifact_id: &str, version: u32, text: &str) -> Result<(), StoreError> {
        let path = self.snapshot_path(artifact_id, version);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        // write-then-rename so a crash never leaves a torn snapshot
        let tmp = path.with_extension("md.tmp");
        fs::write(&tmp, text)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    fn get_snapshot(&self, artifact_id: &str, version: u32) -> Result<Option<String>, StoreError> {
        match fs::read_to_string(self.snapshot_path(artifact_id, version)) {
            Ok(s) => Ok(Some(s)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn events(&self) -> Result<Vec<LogEvent>, StoreError> {
        let file = File::open(self.dir.join("log.jsonl"))?;
        let mut out = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let event = serde_json::from_str(&line)
                .map_err(|e| StoreError::Corrupt(format!("log.jsonl line {}: {e}", n + 1)))?;
            out.push(event);
        }
        Ok(out)
    }
}
