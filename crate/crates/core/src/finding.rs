//! Normalized analyzer findings and the keys used to merge them across tools.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::taxonomy::Taxonomy;

/// Analyzer identity. Reports from one `(name, version)` pair are treated as
/// coming from a single detector.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ToolId {
    pub name: String,
    #[serde(default)]
    pub version: String,
}

impl ToolId {
    pub fn new(name: impl Into<String>, version: impl Into<String>) -> Self {
        ToolId {
            name: name.into(),
            version: version.into(),
        }
    }
}

impl fmt::Display for ToolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct CweId(u32);

impl CweId {
    pub fn new(id: u32) -> Option<Self> {
        (id >= 1).then_some(CweId(id))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl TryFrom<u32> for CweId {
    type Error = String;

    fn try_from(id: u32) -> Result<Self, Self::Error> {
        CweId::new(id).ok_or_else(|| format!("CWE id must be >= 1, got {id}"))
    }
}

impl From<CweId> for u32 {
    fn from(id: CweId) -> u32 {
        id.0
    }
}

impl fmt::Display for CweId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CWE-{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Low,
    #[default]
    Medium,
    High,
    Critical,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Info => "info",
            Severity::Low => "low",
            Severity::Medium => "medium",
            Severity::High => "high",
            Severity::Critical => "critical",
        }
    }
}

/// Lexically normalizes a corpus-relative path: forward slashes, no `.` or
/// empty segments, `..` resolved. Returns `None` when the path escapes its root.
pub fn normalize_path(raw: &str) -> Option<String> {
    let mut parts: Vec<&str> = Vec::new();
    for seg in raw.split(['/', '\\']) {
        match seg {
            "" | "." => {}
            ".." => {
                parts.pop()?;
            }
            s => parts.push(s),
        }
    }
    if parts.is_empty() {
        return None;
    }
    Some(parts.join("/"))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceLocation {
    pub file: String,
    pub line: u32,
    #[serde(rename = "endLine", default, skip_serializing_if = "Option::is_none")]
    pub end_line: Option<u32>,
}

impl SourceLocation {
    pub fn new(file: &str, line: u32, end_line: Option<u32>) -> Option<Self> {
        let file = normalize_path(file)?;
        if line == 0 || end_line.is_some_and(|e| e < line) {
            return None;
        }
        Some(SourceLocation {
            file,
            line,
            end_line,
        })
    }

    /// Last line covered by this location.
    pub fn last_line(&self) -> u32 {
        self.end_line.unwrap_or(self.line)
    }

    pub fn contains_line(&self, line: u32) -> bool {
        self.line <= line && line <= self.last_line()
    }
}

/// One normalized analyzer report entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "FindingRecord", try_from = "FindingRecord")]
pub struct Finding {
    pub tool: ToolId,
    pub rule_id: String,
    pub cwe: Option<CweId>,
    /// Derived from `cwe` through a taxonomy; see [`Finding::classify`].
    pub weakness_class: Option<String>,
    pub location: SourceLocation,
    pub message: String,
    pub severity: Severity,
}

impl Finding {
    /// Sets `weakness_class` from the CWE. Findings without a CWE, or with a
    /// CWE the taxonomy does not classify, end up without a class.
    pub fn classify(&mut self, taxonomy: &Taxonomy) {
        self.weakness_class = self
            .cwe
            .and_then(|cwe| taxonomy.classify(cwe))
            .map(|class| class.label.clone());
    }

    /// Canonical report order.
    pub fn sort_key(&self) -> (&str, u32, &str) {
        (&self.location.file, self.location.line, &self.rule_id)
    }
}

/// Flat JSONL representation of a [`Finding`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FindingRecord {
    tool: String,
    #[serde(rename = "toolVersion", default)]
    tool_version: String,
    #[serde(rename = "ruleId")]
    rule_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cwe: Option<CweId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class: Option<String>,
    file: String,
    line: u32,
    #[serde(rename = "endLine", default, skip_serializing_if = "Option::is_none")]
    end_line: Option<u32>,
    #[serde(default)]
    severity: Severity,
    #[serde(default)]
    message: String,
}

impl From<Finding> for FindingRecord {
    fn from(f: Finding) -> Self {
        FindingRecord {
            tool: f.tool.name,
            tool_version: f.tool.version,
            rule_id: f.rule_id,
            cwe: f.cwe,
            class: f.weakness_class,
            file: f.location.file,
            line: f.location.line,
            end_line: f.location.end_line,
            severity: f.severity,
            message: f.message,
        }
    }
}

impl TryFrom<FindingRecord> for Finding {
    type Error = String;

    fn try_from(r: FindingRecord) -> Result<Self, Self::Error> {
        if r.tool.is_empty() {
            return Err("finding has an empty tool name".into());
        }
        if r.rule_id.is_empty() {
            return Err("finding has an empty ruleId".into());
        }
        if r.class.is_some() && r.cwe.is_none() {
            return Err("finding has a class but no cwe".into());
        }
        let location = SourceLocation::new(&r.file, r.line, r.end_line)
            .ok_or_else(|| format!("invalid location {}:{}", r.file, r.line))?;
        Ok(Finding {
            tool: ToolId::new(r.tool, r.tool_version),
            rule_id: r.rule_id,
            cwe: r.cwe,
            weakness_class: r.class,
            location,
            message: r.message,
            severity: r.severity,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DedupField {
    Tool,
    RuleId,
    Cwe,
    WeaknessClass,
    File,
    Line,
}

impl DedupField {
    fn name(self) -> &'static str {
        match self {
            DedupField::Tool => "tool",
            DedupField::RuleId => "rule",
            DedupField::Cwe => "cwe",
            DedupField::WeaknessClass => "class",
            DedupField::File => "file",
            DedupField::Line => "line",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", try_from = "RawDedupPolicy")]
pub struct DedupPolicy {
    key_fields: BTreeSet<DedupField>,
    line_tolerance: u32,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawDedupPolicy {
    key_fields: BTreeSet<DedupField>,
    #[serde(default)]
    line_tolerance: u32,
}

impl TryFrom<RawDedupPolicy> for DedupPolicy {
    type Error = String;

    fn try_from(raw: RawDedupPolicy) -> Result<Self, String> {
        DedupPolicy::new(raw.key_fields, raw.line_tolerance)
    }
}

impl Default for DedupPolicy {
    /// Same weakness class at the same place, regardless of reporting tool.
    fn default() -> Self {
        DedupPolicy {
            key_fields: [DedupField::WeaknessClass, DedupField::File, DedupField::Line].into(),
            line_tolerance: 0,
        }
    }
}

pub const UNMAPPED: &str = "unmapped";

impl DedupPolicy {
    pub fn new(
        key_fields: impl IntoIterator<Item = DedupField>,
        line_tolerance: u32,
    ) -> Result<Self, String> {
        let key_fields: BTreeSet<_> = key_fields.into_iter().collect();
        if !key_fields.contains(&DedupField::File) {
            return Err("dedup key must include the file".into());
        }
        if line_tolerance > 0 && !key_fields.contains(&DedupField::Line) {
            return Err("line tolerance requires line in the dedup key".into());
        }
        Ok(DedupPolicy {
            key_fields,
            line_tolerance,
        })
    }

    pub fn key_fields(&self) -> &BTreeSet<DedupField> {
        &self.key_fields
    }

    pub fn line_tolerance(&self) -> u32 {
        self.line_tolerance
    }

    pub fn key(&self, finding: &Finding) -> DedupKey {
        let segments = self
            .key_fields
            .iter()
            .map(|&field| {
                let value = match field {
                    DedupField::Tool => finding.tool.name.clone(),
                    DedupField::RuleId => finding.rule_id.clone(),
                    DedupField::Cwe => finding
                        .cwe
                        .map_or_else(|| UNMAPPED.to_string(), |c| c.get().to_string()),
                    // an unclassified CWE still keeps its own identity
                    DedupField::WeaknessClass => match (&finding.weakness_class, finding.cwe) {
                        (Some(class), _) => class.clone(),
                        (None, Some(cwe)) => cwe.to_string(),
                        (None, None) => UNMAPPED.to_string(),
                    },
                    DedupField::File => finding.location.file.clone(),
                    DedupField::Line => {
                        (finding.location.line / (self.line_tolerance + 1)).to_string()
                    }
                };
                (field, value)
            })
            .collect();
        DedupKey(segments)
    }
}

/// Merge identity of a finding under a [`DedupPolicy`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DedupKey(Vec<(DedupField, String)>);

impl fmt::Display for DedupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (field, value)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{}={}", field.name(), value)?;
        }
        Ok(())
    }
}

impl Serialize for DedupKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[cfg(test)]
pub(crate) fn test_finding(tool: &str, file: &str, line: u32, cwe: Option<u32>) -> Finding {
    Finding {
        tool: ToolId::new(tool, "1"),
        rule_id: format!("R{}", cwe.unwrap_or(0)),
        cwe: cwe.and_then(CweId::new),
        weakness_class: None,
        location: SourceLocation::new(file, line, None).unwrap(),
        message: String::new(),
        severity: Severity::Medium,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn file_line() -> DedupPolicy {
        DedupPolicy::new([DedupField::File, DedupField::Line], 0).unwrap()
    }

    #[test]
    fn same_file_same_line_collapse() {
        let a = test_finding("a", "src/x.c", 10, Some(89));
        let b = test_finding("a", "src/x.c", 10, Some(89));
        assert_eq!(file_line().key(&a), file_line().key(&b));
    }

    #[test]
    fn adjacent_lines_stay_apart_without_tolerance() {
        let a = test_finding("a", "src/x.c", 10, Some(89));
        let b = test_finding("a", "src/x.c", 11, Some(89));
        assert_ne!(file_line().key(&a), file_line().key(&b));
    }

    #[test]
    fn tool_excluded_from_key() {
        let a = test_finding("sonar", "src/x.c", 10, Some(89));
        let b = test_finding("pmd", "src/x.c", 10, Some(476));
        assert_eq!(file_line().key(&a), file_line().key(&b));
    }

    #[test]
    fn tolerance_buckets_lines() {
        let p = DedupPolicy::new([DedupField::File, DedupField::Line], 2).unwrap();
        let key = |l| p.key(&test_finding("a", "f.c", l, None));
        assert_eq!(key(3), key(5));
        assert_ne!(key(5), key(6));
    }

    #[test]
    fn missing_class_uses_sentinel() {
        let f = test_finding("a", "f.c", 1, None);
        let key = DedupPolicy::default().key(&f);
        assert_eq!(key.to_string(), "class=unmapped|file=f.c|line=1");
    }

    #[test]
    fn policy_rejects_keys_without_file() {
        assert!(DedupPolicy::new([DedupField::Line], 0).is_err());
        assert!(DedupPolicy::new([DedupField::File], 3).is_err());
        assert!(DedupPolicy::new([DedupField::File], 0).is_ok());
    }

    #[test]
    fn paths_normalize() {
        assert_eq!(normalize_path("./a\\b/../c.java").as_deref(), Some("a/c.java"));
        assert_eq!(normalize_path("/abs//x.c").as_deref(), Some("abs/x.c"));
        assert_eq!(normalize_path("../x.c"), None);
        assert!(SourceLocation::new("a.c", 0, None).is_none());
        assert!(SourceLocation::new("a.c", 5, Some(4)).is_none());
    }

    #[test]
    fn jsonl_record_shape() {
        let mut f = test_finding("sonar", "src/A.java", 7, Some(89));
        f.weakness_class = Some("Injection".into());
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(
            json,
            r#"{"tool":"sonar","toolVersion":"1","ruleId":"R89","cwe":89,"class":"Injection","file":"src/A.java","line":7,"severity":"medium","message":""}"#
        );
        let back: Finding = serde_json::from_str(&json).unwrap();
        assert_eq!(back, f);
        assert!(serde_json::from_str::<Finding>(r#"{"tool":"t","ruleId":"","file":"a","line":1}"#).is_err());
        assert!(serde_json::from_str::<Finding>(r#"{"tool":"t","ruleId":"x","cwe":0,"file":"a","line":1}"#).is_err());
    }

    proptest! {
        #[test]
        fn key_is_pure_and_tolerance_consistent(
            line in 1u32..10_000, tol in 0u32..20, tool_a in "[a-c]", tool_b in "[a-c]"
        ) {
            let p = DedupPolicy::new([DedupField::File, DedupField::Line], tol).unwrap();
            let a = test_finding(&tool_a, "f.c", line, Some(1));
            let b = test_finding(&tool_b, "f.c", line, Some(2));
            prop_assert_eq!(p.key(&a), p.key(&a.clone()));
            prop_assert_eq!(p.key(&a), p.key(&b));
            let bucket_start = line - line % (tol + 1);
            let c = test_finding("z", "f.c", bucket_start.max(1), None);
            prop_assert_eq!(p.key(&a), p.key(&c));
        }
    }
}
