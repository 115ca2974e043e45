use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use rayon::prelude::*;
use serde::Serialize;

use super::report::{AssessmentReport, ToolFailure};
use super::store::{write_atomic, EventKind, Store};
use super::{
    extract_archive, inspect_archive, transition, Action, Decision, GateConfig, Submission, SubmissionState,
};
use crate::adapters::{run_analyzer, AnalyzerSpec, NormalizedReport};
use crate::ensemble::merge;
use crate::error::{Error, IoContext, Result};
use crate::taxonomy::Taxonomy;

/// Result of an assessment run. A submission whose analyzers all failed
/// ends in `Failed` with no report; that is an outcome, not an error.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AssessOutcome {
    pub submission: Submission,
    pub report: Option<AssessmentReport>,
}

/// A listing row with a short summary of the report, when there is one.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct QueueEntry {
    #[serde(flatten)]
    pub submission: Submission,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finding_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_counts: Option<BTreeMap<String, usize>>,
}

pub struct Gate {
    config: GateConfig,
    taxonomy: Taxonomy,
    store: Store,
    submissions: RwLock<HashMap<String, Submission>>,
    decisions: RwLock<HashMap<String, Decision>>,
    /// Serializes state changes per submission.
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    /// Submissions with a scan running in this process.
    active: Mutex<HashSet<String>>,
}

/// Clears the in-process scan marker however the scan ends.
struct ActiveGuard<'a> {
    gate: &'a Gate,
    id: String,
}

impl Drop for ActiveGuard<'_> {
    fn drop(&mut self) {
        self.gate.active.lock().remove(&self.id);
    }
}

impl Gate {
    pub fn open(config: GateConfig) -> Result<Gate> {
        config.validate()?;
        let taxonomy = Taxonomy::builtin(&config.taxonomy)?;
        let (store, replayed) = Store::open(&config.storage_root)?;
        Ok(Gate {
            config,
            taxonomy,
            store,
            submissions: RwLock::new(replayed.submissions),
            decisions: RwLock::new(replayed.decisions),
            locks: Mutex::new(HashMap::new()),
            active: Mutex::new(HashSet::new()),
        })
    }

    pub fn config(&self) -> &GateConfig {
        &self.config
    }

    fn lock_for(&self, id: &str) -> Arc<Mutex<()>> {
        Arc::clone(self.locks.lock().entry(id.to_string()).or_default())
    }

    fn now_after(prev: DateTime<Utc>) -> DateTime<Utc> {
        Utc::now().max(prev)
    }

    pub fn submit(&self, archive: &[u8], submitter: &str) -> Result<Submission> {
        let submitter = submitter.trim();
        if submitter.is_empty() {
            return Err(Error::RejectedInput("submitter is empty".into()));
        }
        let (format, _files) = inspect_archive(archive, self.config.max_archive_bytes)?;
        let sha = {
            use sha2::{Digest, Sha256};
            hex::encode(Sha256::digest(archive))
        };
        let rel = Store::archive_rel(&sha, format);
        let path = self.store.root().join(&rel);
        if !path.is_file() {
            write_atomic(&path, archive)?;
        }
        let now = Utc::now();
        let submission = Submission {
            id: uuid::Uuid::new_v4().to_string(),
            submitter: submitter.to_string(),
            artifact_path: rel,
            archive_sha256: sha,
            archive_format: format,
            state: SubmissionState::Submitted,
            created_at: now,
            updated_at: now,
            report_digest: None,
            failures: Vec::new(),
        };
        self.store.append(
            &submission.id,
            now,
            EventKind::Submitted {
                submission: submission.clone(),
            },
        )?;
        self.submissions.write().insert(submission.id.clone(), submission.clone());
        Ok(submission)
    }

    pub fn get(&self, id: &str) -> Result<Submission> {
        self.submissions
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(id.to_string()))
    }

    /// Oldest first, optionally restricted to one state.
    pub fn list(&self, state: Option<SubmissionState>) -> Vec<Submission> {
        let mut out: Vec<Submission> = self
            .submissions
            .read()
            .values()
            .filter(|s| state.is_none_or(|st| s.state == st))
            .cloned()
            .collect();
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        out
    }

    pub fn queue(&self, state: Option<SubmissionState>) -> Vec<QueueEntry> {
        self.list(state)
            .into_iter()
            .map(|submission| {
                let report = submission
                    .report_digest
                    .as_deref()
                    .and_then(|d| self.read_report(d).ok());
                QueueEntry {
                    finding_count: report.as_ref().map(|r| r.total_findings),
                    class_counts: report
                        .as_ref()
                        .map(|r| r.class_summary.iter().map(|c| (c.class.clone(), c.count)).collect()),
                    submission,
                }
            })
            .collect()
    }

    pub fn decision(&self, id: &str) -> Option<Decision> {
        self.decisions.read().get(id).cloned()
    }

    fn set_state(&self, id: &str, from: SubmissionState, action: Action, digest: Option<String>, failures: Vec<ToolFailure>) -> Result<Submission> {
        let to = transition(from, action)?;
        let prev = self.get(id)?;
        let at = Self::now_after(prev.updated_at);
        self.store.append(
            id,
            at,
            EventKind::StateChanged {
                from,
                to,
                report_digest: digest.clone(),
                failures: failures.clone(),
            },
        )?;
        let mut map = self.submissions.write();
        let s = map.get_mut(id).expect("present above");
        s.state = to;
        s.updated_at = at;
        if digest.is_some() {
            s.report_digest = digest;
        }
        s.failures = failures;
        Ok(s.clone())
    }

    /// Moves a submission into `Scanning`. A submission left in `Scanning`
    /// by a crash, with no scan running here, may be picked up again.
    pub fn start_assess(&self, id: &str) -> Result<Submission> {
        let lock = self.lock_for(id);
        let _held = lock.lock();
        let current = self.get(id)?;
        let mut active = self.active.lock();
        if current.state == SubmissionState::Scanning && !active.contains(id) {
            active.insert(id.to_string());
            return Ok(current);
        }
        let next = transition(current.state, Action::StartScan)?;
        debug_assert_eq!(next, SubmissionState::Scanning);
        active.insert(id.to_string());
        drop(active);
        match self.set_state(id, current.state, Action::StartScan, None, Vec::new()) {
            Ok(s) => Ok(s),
            Err(e) => {
                self.active.lock().remove(id);
                Err(e)
            }
        }
    }

    /// Runs the analyzers for a submission already in `Scanning`.
    pub fn finish_assess(&self, id: &str) -> Result<AssessOutcome> {
        self.active.lock().insert(id.to_string());
        let _guard = ActiveGuard {
            gate: self,
            id: id.to_string(),
        };
        let submission = self.get(id)?;
        if submission.state != SubmissionState::Scanning {
            return Err(Error::InvalidTransition {
                from: submission.state,
                action: Action::FinishScan.name(),
            });
        }

        let target = self.store.work_dir(&submission.archive_sha256);
        if !target.is_dir() {
            let archive_path = self.store.root().join(&submission.artifact_path);
            let bytes = std::fs::read(&archive_path).io_context(|| format!("reading {}", archive_path.display()))?;
            extract_archive(&bytes, submission.archive_format, self.config.max_archive_bytes, &target)?;
        }

        let runs: Vec<std::result::Result<NormalizedReport, ToolFailure>> = self
            .config
            .analyzers
            .par_iter()
            .map(|spec| self.run_cached(spec, &submission.archive_sha256, &target))
            .collect();
        let mut reports = Vec::new();
        let mut failures = Vec::new();
        for run in runs {
            match run {
                Ok(r) => reports.push(r),
                Err(f) => failures.push(f),
            }
        }

        let lock = self.lock_for(id);
        let _held = lock.lock();
        if reports.is_empty() {
            let submission = self.set_state(id, SubmissionState::Scanning, Action::FailScan, None, failures)?;
            return Ok(AssessOutcome {
                submission,
                report: None,
            });
        }

        for r in &mut reports {
            r.classify(&self.taxonomy);
        }
        let refs: Vec<&NormalizedReport> = reports.iter().collect();
        let ensemble = merge(&refs, &self.config.dedup_policy)?;
        let built = AssessmentReport::build(id, &ensemble, &reports, &self.taxonomy, failures.clone());
        let path = self.store.report_path(&built.digest);
        // content-addressed: a retry that reproduces the report keeps the stored bytes
        let report = if path.is_file() {
            self.read_report(&built.digest)?
        } else {
            write_atomic(&path, &serde_json::to_vec_pretty(&built)?)?;
            built
        };
        let submission = self.set_state(
            id,
            SubmissionState::Scanning,
            Action::FinishScan,
            Some(report.digest.clone()),
            failures,
        )?;
        Ok(AssessOutcome {
            submission,
            report: Some(report),
        })
    }

    /// Analyzer output is cached per (archive, analyzer spec); a failed run
    /// leaves no cache entry and is retried next time.
    fn run_cached(&self, spec: &AnalyzerSpec, sha: &str, target: &std::path::Path) -> std::result::Result<NormalizedReport, ToolFailure> {
        let out_dir = self.store.outputs_dir(sha, &spec.digest());
        let cached = out_dir.join("normalized.json");
        if let Ok(bytes) = std::fs::read(&cached) {
            if let Ok(report) = serde_json::from_slice::<NormalizedReport>(&bytes) {
                return Ok(report);
            }
        }
        let failure = |e: Error| ToolFailure {
            tool: spec.tool.name.clone(),
            timed_out: matches!(e, Error::AnalyzerTimeout { .. }),
            error: e.to_string(),
        };
        let run = run_analyzer(spec, target, &out_dir).map_err(failure)?;
        let bytes = serde_json::to_vec(&run.report).map_err(|e| failure(e.into()))?;
        write_atomic(&cached, &bytes).map_err(failure)?;
        Ok(run.report)
    }

    pub fn assess(&self, id: &str) -> Result<AssessOutcome> {
        self.start_assess(id)?;
        self.finish_assess(id)
    }

    pub fn decide(&self, id: &str, mut decision: Decision) -> Result<Submission> {
        if decision.moderator.trim().is_empty() {
            return Err(Error::InvalidDecision("moderator is empty".into()));
        }
        if decision.rationale.trim().is_empty() {
            return Err(Error::InvalidDecision("rationale is empty".into()));
        }
        let lock = self.lock_for(id);
        let _held = lock.lock();
        let current = self.get(id)?;
        if self.decisions.read().contains_key(id) {
            return Err(Error::AlreadyDecided(id.to_string()));
        }
        let to = transition(current.state, Action::Decide(decision.verdict))?;
        if !decision.triage.is_empty() {
            let report = self.get_report(id)?;
            if let Some(unknown) = decision.triage.keys().find(|k| !report.agreement.contains_key(*k)) {
                return Err(Error::InvalidDecision(format!("triage refers to unknown finding {unknown:?}")));
            }
        }
        decision.submission_id = id.to_string();
        let at = Self::now_after(current.updated_at);
        decision.decided_at = at;

        let path = self.store.decision_path(id);
        let mut file = match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => return Err(Error::AlreadyDecided(id.to_string())),
            Err(e) => return Err(Error::io(format!("creating {}", path.display()), e)),
        };
        use std::io::Write;
        file.write_all(&serde_json::to_vec_pretty(&decision)?)
            .and_then(|_| file.sync_data())
            .io_context(|| format!("writing {}", path.display()))?;

        self.store.append(
            id,
            at,
            EventKind::Decided {
                decision: decision.clone(),
                to,
            },
        )?;
        self.decisions.write().insert(id.to_string(), decision);
        let mut map = self.submissions.write();
        let s = map.get_mut(id).expect("present above");
        s.state = to;
        s.updated_at = at;
        Ok(s.clone())
    }

    fn read_report(&self, digest: &str) -> Result<AssessmentReport> {
        Ok(serde_json::from_slice(&self.read_report_bytes(digest)?)?)
    }

    fn read_report_bytes(&self, digest: &str) -> Result<Vec<u8>> {
        let path = self.store.report_path(digest);
        std::fs::read(&path).io_context(|| format!("reading {}", path.display()))
    }

    /// The stored report, byte for byte.
    pub fn get_report_bytes(&self, id: &str) -> Result<Vec<u8>> {
        let s = self.get(id)?;
        match (&s.report_digest, s.state.has_report()) {
            (Some(digest), true) => self.read_report_bytes(digest),
            _ => Err(Error::NotReady(id.to_string())),
        }
    }

    pub fn get_report(&self, id: &str) -> Result<AssessmentReport> {
        Ok(serde_json::from_slice(&self.get_report_bytes(id)?)?)
    }

    /// Syncs the event log; called on shutdown.
    pub fn flush(&self) -> Result<()> {
        self.store.flush()
    }
}
