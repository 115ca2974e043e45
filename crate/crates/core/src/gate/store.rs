//! Directory-tree storage with an append-only JSONL event log.
//!
//! ```text
//! root/
//!   events.jsonl                   source of truth, replayed on open
//!   archives/<sha256>.<ext>        submitted archives, content-addressed
//!   work/<sha256>/                 extracted archives
//!   outputs/<sha256>/<spec>/       analyzer output, execution record, normalized report
//!   reports/<digest>.json          assessment reports, content-addressed
//!   decisions/<id>.json            one per submission, never overwritten
//! ```

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::{ArchiveFormat, Decision, Submission, SubmissionState, ToolFailure};
use crate::error::{Error, IoContext, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Event {
    pub seq: u64,
    pub at: DateTime<Utc>,
    pub submission_id: String,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase")]
pub enum EventKind {
    Submitted {
        submission: Submission,
    },
    #[serde(rename_all = "camelCase")]
    StateChanged {
        from: SubmissionState,
        to: SubmissionState,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        report_digest: Option<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        failures: Vec<ToolFailure>,
    },
    Decided {
        decision: Decision,
        to: SubmissionState,
    },
}

/// State rebuilt from the event log.
#[derive(Debug, Default)]
pub(crate) struct Replayed {
    pub submissions: HashMap<String, Submission>,
    pub decisions: HashMap<String, Decision>,
}

impl Replayed {
    pub fn apply(&mut self, event: &Event) {
        match &event.kind {
            EventKind::Submitted { submission } => {
                self.submissions.insert(submission.id.clone(), submission.clone());
            }
            EventKind::StateChanged {
                to,
                report_digest,
                failures,
                ..
            } => {
                if let Some(s) = self.submissions.get_mut(&event.submission_id) {
                    s.state = *to;
                    s.updated_at = event.at;
                    if report_digest.is_some() {
                        s.report_digest = report_digest.clone();
                    }
                    s.failures = failures.clone();
                }
            }
            EventKind::Decided { decision, to } => {
                if let Some(s) = self.submissions.get_mut(&event.submission_id) {
                    s.state = *to;
                    s.updated_at = event.at;
                }
                self.decisions.insert(event.submission_id.clone(), decision.clone());
            }
        }
    }
}

pub(crate) struct Store {
    root: PathBuf,
    log: Mutex<(File, u64)>,
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).io_context(|| format!("creating {}", dir.display()))?;
    let tmp = dir.join(format!(".tmp.{}", uuid::Uuid::new_v4().simple()));
    std::fs::write(&tmp, bytes).io_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).io_context(|| format!("moving into {}", path.display()))
}

impl Store {
    pub fn open(root: &Path) -> Result<(Store, Replayed)> {
        for dir in ["archives", "work", "outputs", "reports", "decisions"] {
            let d = root.join(dir);
            std::fs::create_dir_all(&d).io_context(|| format!("creating {}", d.display()))?;
        }
        let log_path = root.join("events.jsonl");
        let mut replayed = Replayed::default();
        let mut last_seq = 0;
        if log_path.exists() {
            let text = std::fs::read_to_string(&log_path).io_context(|| format!("reading {}", log_path.display()))?;
            let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
            for (i, line) in lines.iter().enumerate() {
                match serde_json::from_str::<Event>(line) {
                    Ok(event) => {
                        last_seq = event.seq;
                        replayed.apply(&event);
                    }
                    // a torn final record from a crash mid-append is dropped
                    Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {
                        log::warn!("ignoring incomplete last event record in {}", log_path.display());
                    }
                    Err(e) => {
                        return Err(Error::InvalidConfig(format!("{} line {}: {e}", log_path.display(), i + 1)));
                    }
                }
            }
            if !text.is_empty() && !text.ends_with('\n') {
                // cut the torn tail so the next append starts on a fresh line
                let keep = text.rfind('\n').map_or(0, |p| p + 1);
                let f = OpenOptions::new().write(true).open(&log_path).io_context(|| format!("opening {}", log_path.display()))?;
                f.set_len(keep as u64).io_context(|| format!("truncating {}", log_path.display()))?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .io_context(|| format!("opening {}", log_path.display()))?;
        Ok((
            Store {
                root: root.to_path_buf(),
                log: Mutex::new((file, last_seq)),
            },
            replayed,
        ))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Appends one record and syncs it before returning.
    pub fn append(&self, submission_id: &str, at: DateTime<Utc>, kind: EventKind) -> Result<Event> {
        let mut guard = self.log.lock();
        let (file, seq) = &mut *guard;
        let event = Event {
            seq: *seq + 1,
            at,
            submission_id: submission_id.to_string(),
            kind,
        };
        let mut line = serde_json::to_vec(&event)?;
        line.push(b'\n');
        file.write_all(&line).io_context(|| "appending to the event log".into())?;
        file.sync_data().io_context(|| "syncing the event log".into())?;
        *seq += 1;
        Ok(event)
    }

    pub fn flush(&self) -> Result<()> {
        let guard = self.log.lock();
        guard.0.sync_all().io_context(|| "syncing the event log".into())
    }

    pub fn archive_rel(sha: &str, format: ArchiveFormat) -> String {
        format!("archives/{sha}.{}", format.extension())
    }

    pub fn work_dir(&self, sha: &str) -> PathBuf {
        self.root.join("work").join(sha)
    }

    pub fn outputs_dir(&self, sha: &str, spec_digest: &str) -> PathBuf {
        self.root.join("outputs").join(sha).join(spec_digest)
    }

    pub fn report_path(&self, digest: &str) -> PathBuf {
        self.root.join("reports").join(format!("{digest}.json"))
    }

    pub fn decision_path(&self, id: &str) -> PathBuf {
        self.root.join("decisions").join(format!("{id}.json"))
    }
}
