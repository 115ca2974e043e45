use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::adapters::NormalizedReport;
use crate::ensemble::Ensemble;
use crate::finding::{Finding, Severity, ToolId};
use crate::taxonomy::{Taxonomy, UNCLASSIFIED};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ToolFailure {
    pub tool: String,
    pub error: String,
    #[serde(default)]
    pub timed_out: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReportFinding {
    /// Dedup key; triage entries refer to findings by it.
    pub key: String,
    pub agreement: usize,
    pub tools: Vec<String>,
    pub finding: Finding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClassGroup {
    pub class: String,
    pub findings: Vec<ReportFinding>,
}

/// What a moderator sees in place of a vulnerability level: how many
/// findings per class and the worst severity among them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClassSummary {
    pub class: String,
    pub count: usize,
    pub highest_severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AssessmentReport {
    pub submission_id: String,
    /// Analyzers whose output made it into the report.
    pub members: Vec<ToolId>,
    pub total_findings: usize,
    /// Merged findings grouped by weakness class, taxonomy order first.
    pub findings: Vec<ClassGroup>,
    /// Findings per analyzer before merging.
    pub per_tool_counts: BTreeMap<String, usize>,
    pub agreement: BTreeMap<String, usize>,
    pub class_summary: Vec<ClassSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub highest_severity: Option<Severity>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<ToolFailure>,
    /// Analyzers that exited non-zero but still produced a report.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degraded: Vec<String>,
    pub generated_at: DateTime<Utc>,
    /// sha256 over the report with `generatedAt` and `digest` blanked.
    pub digest: String,
}

impl AssessmentReport {
    pub fn build(
        submission_id: &str,
        ensemble: &Ensemble,
        tool_reports: &[NormalizedReport],
        taxonomy: &Taxonomy,
        failures: Vec<ToolFailure>,
    ) -> Self {
        let mut groups: BTreeMap<usize, ClassGroup> = BTreeMap::new();
        let mut agreement = BTreeMap::new();
        let unclassified_slot = taxonomy.classes().len();
        for (f, tools) in ensemble.merged_report.findings.iter().zip(&ensemble.attribution) {
            let mut f = f.clone();
            f.classify(taxonomy);
            let key = ensemble.policy.key(&f).to_string();
            agreement.insert(key.clone(), tools.len());
            let (slot, label) = match &f.weakness_class {
                Some(label) => (
                    taxonomy.classes().iter().position(|c| &c.label == label).unwrap_or(unclassified_slot),
                    label.clone(),
                ),
                None => (unclassified_slot, UNCLASSIFIED.to_string()),
            };
            groups
                .entry(slot)
                .or_insert_with(|| ClassGroup {
                    class: label,
                    findings: Vec::new(),
                })
                .findings
                .push(ReportFinding {
                    key,
                    agreement: tools.len(),
                    tools: tools.iter().cloned().collect(),
                    finding: f,
                });
        }
        let findings: Vec<ClassGroup> = groups.into_values().collect();
        let class_summary: Vec<ClassSummary> = findings
            .iter()
            .map(|g| ClassSummary {
                class: g.class.clone(),
                count: g.findings.len(),
                highest_severity: g.findings.iter().map(|f| f.finding.severity).max().unwrap_or_default(),
            })
            .collect();
        let mut report = AssessmentReport {
            submission_id: submission_id.to_string(),
            members: ensemble.members.clone(),
            total_findings: ensemble.merged_report.findings.len(),
            highest_severity: class_summary.iter().map(|c| c.highest_severity).max(),
            findings,
            per_tool_counts: tool_reports.iter().map(|r| (r.tool.name.clone(), r.findings.len())).collect(),
            agreement,
            class_summary,
            failures,
            degraded: tool_reports.iter().filter(|r| r.degraded).map(|r| r.tool.name.clone()).collect(),
            generated_at: Utc::now(),
            digest: String::new(),
        };
        report.digest = report.compute_digest();
        report
    }

    pub fn compute_digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut canonical = self.clone();
        canonical.generated_at = DateTime::<Utc>::UNIX_EPOCH;
        canonical.digest = String::new();
        let json = serde_json::to_vec(&canonical).expect("report serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn all_findings(&self) -> impl Iterator<Item = &ReportFinding> {
        self.findings.iter().flat_map(|g| g.findings.iter())
    }
}
