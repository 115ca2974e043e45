use std::path::PathBuf;
use std::time::Duration;

use crate::gate::SubmissionState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed manifest {path}: {reason}")]
    MalformedManifest { path: PathBuf, reason: String },

    #[error("manifest invariant violated: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvariantViolation(Vec<crate::corpus::Violation>),

    #[error("manifest references missing files: {}", .0.join(", "))]
    MissingFiles(Vec<String>),

    #[error("no test cases found under {0}")]
    EmptyCorpus(PathBuf),

    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),

    #[error("unknown taxonomy {0:?}")]
    UnknownTaxonomy(String),

    #[error("malformed report: {0}")]
    MalformedReport(String),

    #[error("unknown report format {0:?}")]
    UnknownFormat(String),

    #[error("invalid analyzer spec: {0}")]
    InvalidAnalyzerSpec(String),

    #[error("analyzer {tool} failed with exit code {code:?}: {stderr_tail}")]
    AnalyzerFailed {
        tool: String,
        code: Option<i32>,
        stderr_tail: String,
    },

    #[error("analyzer {tool} timed out after {timeout:?}")]
    AnalyzerTimeout { tool: String, timeout: Duration },

    #[error("target mismatch: expected {expected:?}, found {found:?}")]
    TargetMismatch { expected: String, found: String },

    #[error("results were computed against different manifests")]
    ManifestMismatch,

    #[error("no report for ensemble member {0}")]
    MissingMember(String),

    #[error("exhaustive search over {0} tools exceeds the limit of {max}; use the greedy strategy", max = crate::ensemble::MAX_EXHAUSTIVE_TOOLS)]
    TooManyTools(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid transition from {from:?} via {action}")]
    InvalidTransition {
        from: SubmissionState,
        action: &'static str,
    },

    #[error("submission {0} already has a decision")]
    AlreadyDecided(String),

    #[error("invalid decision: {0}")]
    InvalidDecision(String),

    #[error("submission {0} not found")]
    NotFound(String),

    #[error("report for submission {0} is not ready")]
    NotReady(String),

    #[error("rejected input: {0}")]
    RejectedInput(String),

    #[error("archive of {size} bytes exceeds the cap of {cap} bytes")]
    TooLarge { size: u64, cap: u64 },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub(crate) trait IoContext<T> {
    fn io_context(self, context: impl FnOnce() -> String) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn io_context(self, context: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| Error::io(context(), e))
    }
}
