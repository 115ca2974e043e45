//! The security gate: submissions are scanned by an analyzer ensemble and a
//! moderator's verdict publishes or rejects them.

mod archive;
mod report;
mod service;
mod store;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::adapters::AnalyzerSpec;
use crate::error::{Error, IoContext, Result};
use crate::finding::DedupPolicy;
use crate::taxonomy::DEFAULT_TAXONOMY;

pub use archive::{detect_format, extract_archive, inspect_archive, ArchiveFormat};
pub use report::{AssessmentReport, ClassSummary, ReportFinding, ToolFailure};
pub use service::{AssessOutcome, Gate, QueueEntry};
pub use store::{Event, EventKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SubmissionState {
    Submitted,
    Scanning,
    AwaitingReview,
    Published,
    Rejected,
    Failed,
}

impl SubmissionState {
    pub const ALL: [SubmissionState; 6] = [
        SubmissionState::Submitted,
        SubmissionState::Scanning,
        SubmissionState::AwaitingReview,
        SubmissionState::Published,
        SubmissionState::Rejected,
        SubmissionState::Failed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SubmissionState::Submitted => "Submitted",
            SubmissionState::Scanning => "Scanning",
            SubmissionState::AwaitingReview => "AwaitingReview",
            SubmissionState::Published => "Published",
            SubmissionState::Rejected => "Rejected",
            SubmissionState::Failed => "Failed",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, SubmissionState::Published | SubmissionState::Rejected | SubmissionState::Failed)
    }

    /// A report exists from this state on.
    pub fn has_report(self) -> bool {
        matches!(
            self,
            SubmissionState::AwaitingReview | SubmissionState::Published | SubmissionState::Rejected
        )
    }
}

impl fmt::Display for SubmissionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SubmissionState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SubmissionState::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown submission state {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Inputs of the state machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    StartScan,
    FinishScan,
    FailScan,
    Decide(Verdict),
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::StartScan,
        Action::FinishScan,
        Action::FailScan,
        Action::Decide(Verdict::Pass),
        Action::Decide(Verdict::Fail),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Action::StartScan => "assess",
            Action::FinishScan => "finish-scan",
            Action::FailScan => "fail-scan",
            Action::Decide(_) => "decide",
        }
    }
}

/// The only legal moves. Publication requires a pass verdict by construction.
pub fn transition(from: SubmissionState, action: Action) -> Result<SubmissionState> {
    use SubmissionState::*;
    let to = match (from, action) {
        (Submitted, Action::StartScan) => Scanning,
        (Scanning, Action::FinishScan) => AwaitingReview,
        (Scanning, Action::FailScan) => Failed,
        (AwaitingReview, Action::Decide(Verdict::Pass)) => Published,
        (AwaitingReview, Action::Decide(Verdict::Fail)) => Rejected,
        _ => {
            return Err(Error::InvalidTransition {
                from,
                action: action.name(),
            })
        }
    };
    Ok(to)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Submission {
    pub id: String,
    pub submitter: String,
    /// Content-addressed archive path, relative to the storage root.
    pub artifact_path: String,
    pub archive_sha256: String,
    pub archive_format: ArchiveFormat,
    pub state: SubmissionState,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<ToolFailure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriageLabel {
    Confirmed,
    FalsePositive,
    WontFix,
}

/// A moderator's verdict. `decided_at` is filled in by the gate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Decision {
    #[serde(default)]
    pub submission_id: String,
    pub moderator: String,
    pub verdict: Verdict,
    pub rationale: String,
    /// Keyed by the merged finding's dedup key.
    #[serde(default)]
    pub triage: BTreeMap<String, TriageLabel>,
    #[serde(default = "Utc::now")]
    pub decided_at: DateTime<Utc>,
}

impl Decision {
    pub fn new(moderator: impl Into<String>, verdict: Verdict, rationale: impl Into<String>) -> Self {
        Decision {
            submission_id: String::new(),
            moderator: moderator.into(),
            verdict,
            rationale: rationale.into(),
            triage: BTreeMap::new(),
            decided_at: Utc::now(),
        }
    }
}

pub const DEFAULT_MAX_ARCHIVE_BYTES: u64 = 64 * 1024 * 1024;
pub const DEFAULT_PORT: u16 = 8080;

fn default_max_archive_bytes() -> u64 {
    DEFAULT_MAX_ARCHIVE_BYTES
}

fn default_port() -> u16 {
    DEFAULT_PORT
}

fn default_taxonomy() -> String {
    DEFAULT_TAXONOMY.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GateConfig {
    pub storage_root: PathBuf,
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default = "default_max_archive_bytes")]
    pub max_archive_bytes: u64,
    pub analyzers: Vec<AnalyzerSpec>,
    #[serde(default)]
    pub dedup_policy: DedupPolicy,
    #[serde(default = "default_taxonomy")]
    pub taxonomy: String,
    /// Bearer token required for decisions. `None` leaves them open.
    #[serde(default)]
    pub moderator_token: Option<String>,
}

impl GateConfig {
    pub fn new(storage_root: impl Into<PathBuf>, analyzers: Vec<AnalyzerSpec>) -> Self {
        GateConfig {
            storage_root: storage_root.into(),
            port: DEFAULT_PORT,
            max_archive_bytes: DEFAULT_MAX_ARCHIVE_BYTES,
            analyzers,
            dedup_policy: DedupPolicy::default(),
            taxonomy: default_taxonomy(),
            moderator_token: None,
        }
    }

    /// Reads the config; a relative storage root is taken relative to the
    /// config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).io_context(|| format!("reading config {}", path.display()))?;
        let mut config: GateConfig = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        if config.storage_root.is_relative() {
            if let Some(dir) = path.parent() {
                config.storage_root = dir.join(&config.storage_root);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.analyzers.is_empty() {
            return Err(Error::InvalidConfig("no analyzers configured".into()));
        }
        let mut names = std::collections::HashSet::new();
        for spec in &self.analyzers {
            spec.validate()?;
            if !names.insert(spec.tool.name.as_str()) {
                return Err(Error::InvalidConfig(format!("analyzer {} configured twice", spec.tool)));
            }
        }
        if self.max_archive_bytes == 0 {
            return Err(Error::InvalidConfig("maxArchiveBytes must be positive".into()));
        }
        crate::taxonomy::Taxonomy::builtin(&self.taxonomy)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Every action sequence up to length 6 from Submitted.
    fn walks(depth: usize) -> Vec<(Vec<Action>, SubmissionState)> {
        let mut out = vec![(vec![], SubmissionState::Submitted)];
        let mut frontier = out.clone();
        for _ in 0..depth {
            let mut next = Vec::new();
            for (path, state) in &frontier {
                for a in Action::ALL {
                    if let Ok(to) = transition(*state, a) {
                        let mut p = path.clone();
                        p.push(a);
                        next.push((p, to));
                    }
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out
    }

    #[test]
    fn published_only_through_a_pass_verdict() {
        for (path, state) in walks(6) {
            if state == SubmissionState::Published {
                assert_eq!(path.last(), Some(&Action::Decide(Verdict::Pass)), "{path:?}");
            }
        }
    }

    #[test]
    fn every_illegal_pair_is_rejected() {
        use SubmissionState::*;
        let legal = [
            (Submitted, Action::StartScan),
            (Scanning, Action::FinishScan),
            (Scanning, Action::FailScan),
            (AwaitingReview, Action::Decide(Verdict::Pass)),
            (AwaitingReview, Action::Decide(Verdict::Fail)),
        ];
        for s in SubmissionState::ALL {
            for a in Action::ALL {
                assert_eq!(transition(s, a).is_ok(), legal.contains(&(s, a)), "{s} {a:?}");
            }
        }
        assert_eq!(transition(AwaitingReview, Action::Decide(Verdict::Fail)).unwrap(), Rejected);
    }

    #[test]
    fn terminal_states_have_no_exits() {
        for s in SubmissionState::ALL.into_iter().filter(|s| s.is_terminal()) {
            assert!(Action::ALL.iter().all(|&a| transition(s, a).is_err()));
        }
    }

    #[test]
    fn state_names_roundtrip() {
        for s in SubmissionState::ALL {
            assert_eq!(s.as_str().parse::<SubmissionState>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{s}\""));
        }
    }
}
