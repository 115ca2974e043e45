//! Analyzer output ingestion: SARIF, native plug-in formats, rule-to-CWE
//! mapping and external analyzer execution.

mod native;
mod runner;
mod sarif;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::finding::{normalize_path, CweId, Finding, ToolId};
use crate::taxonomy::Taxonomy;

pub use native::{native_parser, NativeParser, NATIVE_PARSERS};
pub use runner::{run_analyzer, AnalyzerRun, AnalyzerSpec, ExecutionRecord};
pub use sarif::parse_sarif;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DefaultAction {
    Drop,
    #[default]
    KeepUnmapped,
}

/// Rule id → CWE table for one analyzer family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RuleMap {
    /// Tool name pattern; `*` matches any run of characters, case-insensitive.
    pub tool: String,
    #[serde(default)]
    pub entries: BTreeMap<String, CweId>,
    #[serde(default)]
    pub default_action: DefaultAction,
}

const BUILTIN_RULE_MAPS: &[(&str, &str)] = &[
    ("sonarqube", include_str!("../../data/rulemap-sonarqube.json")),
    ("pmd", include_str!("../../data/rulemap-pmd.json")),
    ("spotbugs", include_str!("../../data/rulemap-spotbugs.json")),
];

impl Default for RuleMap {
    fn default() -> Self {
        RuleMap {
            tool: "*".into(),
            entries: BTreeMap::new(),
            default_action: DefaultAction::KeepUnmapped,
        }
    }
}

impl RuleMap {
    pub fn builtin(name: &str) -> Result<Self> {
        let (_, text) = BUILTIN_RULE_MAPS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::InvalidConfig(format!("no bundled rule map named {name:?}")))?;
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .io_context(|| format!("reading rule map {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN_RULE_MAPS.iter().map(|(n, _)| *n)
    }

    /// First bundled map whose tool pattern matches `tool`.
    pub fn builtin_for(tool: &ToolId) -> Option<Self> {
        Self::builtin_names()
            .filter_map(|n| Self::builtin(n).ok())
            .find(|m| m.applies_to(tool))
    }

    pub fn applies_to(&self, tool: &ToolId) -> bool {
        glob_match(&self.tool.to_ascii_lowercase(), &tool.name.to_ascii_lowercase())
    }
}

fn glob_match(pattern: &str, text: &str) -> bool {
    match pattern.split_once('*') {
        None => pattern == text,
        Some((head, rest)) => {
            let Some(tail) = text.strip_prefix(head) else {
                return false;
            };
            (0..=tail.len())
                .filter(|&i| tail.is_char_boundary(i))
                .any(|i| glob_match(rest, &tail[i..]))
        }
    }
}

static CWE_TOKEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bcwe[-_]?0*([1-9]\d*)").unwrap());

/// First `CWE-<n>` style token in `text`.
pub fn extract_cwe(text: &str) -> Option<CweId> {
    CWE_TOKEN
        .captures_iter(text)
        .find_map(|c| c[1].parse().ok().and_then(CweId::new))
}

/// Table lookup (exact, then without a `lang:` prefix), then a CWE token
/// embedded in the rule id.
pub fn map_rule(tool: &ToolId, rule_id: &str, rule_map: &RuleMap) -> Option<CweId> {
    if rule_map.applies_to(tool) {
        if let Some(&cwe) = rule_map.entries.get(rule_id) {
            return Some(cwe);
        }
        if let Some((_, bare)) = rule_id.split_once(':') {
            if let Some(&cwe) = rule_map.entries.get(bare) {
                return Some(cwe);
            }
        }
    }
    extract_cwe(rule_id)
}

/// Counts of input entries that did not become findings.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Diagnostics {
    pub missing_location: usize,
    pub outside_target: usize,
    pub missing_rule: usize,
    pub dropped_unmapped: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NormalizedReport {
    pub tool: ToolId,
    /// Corpus root or submission id the finding paths are relative to.
    pub target: String,
    pub findings: Vec<Finding>,
    /// Findings dropped or left without a CWE by rule mapping.
    pub unmapped_count: usize,
    pub diagnostics: Diagnostics,
    pub produced_at: DateTime<Utc>,
    #[serde(default)]
    pub degraded: bool,
}

impl NormalizedReport {
    pub fn new(tool: ToolId, target: impl Into<String>, findings: Vec<Finding>) -> Self {
        let mut report = NormalizedReport {
            tool,
            target: target.into(),
            unmapped_count: findings.iter().filter(|f| f.cwe.is_none()).count(),
            findings,
            diagnostics: Diagnostics::default(),
            produced_at: Utc::now(),
            degraded: false,
        };
        report.canonicalize();
        report
    }

    /// Stable (file, line, ruleId) order.
    pub fn canonicalize(&mut self) {
        self.findings.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    }

    pub fn classify(&mut self, taxonomy: &Taxonomy) {
        for f in &mut self.findings {
            f.classify(taxonomy);
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for f in &self.findings {
            out.push_str(&serde_json::to_string(f).expect("finding serializes"));
            out.push('\n');
        }
        out
    }

    /// Reads one finding per line. The tool identity comes from the first
    /// line, or `fallback_tool` for an empty file.
    pub fn from_jsonl(text: &str, target: &str, fallback_tool: &str) -> Result<Self> {
        let mut findings = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: Finding = serde_json::from_str(line)
                .map_err(|e| Error::MalformedReport(format!("line {}: {e}", i + 1)))?;
            findings.push(f);
        }
        let tool = findings
            .first()
            .map(|f| f.tool.clone())
            .unwrap_or_else(|| ToolId::new(fallback_tool, ""));
        Ok(NormalizedReport::new(tool, target, findings))
    }

    pub fn load_jsonl(path: &Path, target: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .io_context(|| format!("reading report {}", path.display()))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "unknown".into());
        NormalizedReport::from_jsonl(&text, target, &stem)
    }
}

/// Input format of an analyzer report.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum OutputFormat {
    Sarif,
    Native(String),
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let name = s.strip_prefix("native:").unwrap_or(s);
        if s == "sarif" {
            Ok(OutputFormat::Sarif)
        } else if native_parser(name).is_some() {
            Ok(OutputFormat::Native(name.to_string()))
        } else {
            Err(Error::UnknownFormat(s.to_string()))
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutputFormat::Sarif => f.write_str("sarif"),
            OutputFormat::Native(name) => write!(f, "native:{name}"),
        }
    }
}

impl Serialize for OutputFormat {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OutputFormat {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn parse_report(
    format: &OutputFormat,
    document: &[u8],
    rule_map: &RuleMap,
    target_root: &Path,
) -> Result<NormalizedReport> {
    match format {
        OutputFormat::Sarif => parse_sarif(document, rule_map, target_root),
        OutputFormat::Native(name) => native_parser(name)
            .ok_or_else(|| Error::UnknownFormat(name.clone()))?
            .parse(document, rule_map, target_root),
    }
}

/// Like [`parse_report`], picking the bundled rule map that matches the
/// report's tool, if any.
pub fn parse_report_auto(format: &OutputFormat, document: &[u8], target_root: &Path) -> Result<NormalizedReport> {
    let first = parse_report(format, document, &RuleMap::default(), target_root)?;
    match RuleMap::builtin_for(&first.tool) {
        Some(map) => parse_report(format, document, &map, target_root),
        None => Ok(first),
    }
}

/// Maps an analyzer-reported path onto a path relative to `target_root`.
/// Accepts relative paths, absolute paths under the root and `file://` URIs.
pub(crate) fn relativize(raw: &str, target_root: &Path) -> Option<String> {
    let decoded = percent_decode(raw);
    let mut path = decoded.as_str();
    if let Some(rest) = path.strip_prefix("file://") {
        path = rest.strip_prefix("localhost").unwrap_or(rest);
        // file:///C:/x
        if path.len() > 3 && path.as_bytes()[2] == b':' {
            path = &path[1..];
        }
    }
    let path = path.replace('\\', "/");
    let is_absolute = path.starts_with('/') || (path.len() > 2 && path.as_bytes()[1] == b':');
    if !is_absolute {
        return normalize_path(&path);
    }
    let mut roots = vec![target_root.to_string_lossy().replace('\\', "/")];
    if let Ok(canon) = target_root.canonicalize() {
        roots.push(canon.to_string_lossy().replace('\\', "/"));
    }
    roots.iter().find_map(|root| {
        let root = root.trim_end_matches('/');
        let rest = path.strip_prefix(root)?;
        rest.starts_with('/').then(|| normalize_path(rest)).flatten()
    })
}

fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            if let Some(v) = s.get(i + 1..i + 3).and_then(|h| u8::from_str_radix(h, 16).ok()) {
                out.push(v);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tool(name: &str) -> ToolId {
        ToolId::new(name, "1")
    }

    #[test]
    fn rule_id_with_embedded_cwe() {
        let cwe = map_rule(&tool("x"), "CWE-476-null-deref", &RuleMap::default());
        assert_eq!(cwe.map(CweId::get), Some(476));
    }

    #[test]
    fn table_lookup() {
        let map = RuleMap {
            entries: [("X1".to_string(), CweId::new(561).unwrap())].into(),
            ..RuleMap::default()
        };
        assert_eq!(map_rule(&tool("x"), "X1", &map).map(CweId::get), Some(561));
        assert_eq!(map_rule(&tool("x"), "X2", &map), None);
    }

    #[test]
    fn language_prefixed_sonar_keys() {
        let map = RuleMap::builtin("sonarqube").unwrap();
        assert_eq!(map_rule(&tool("SonarQube"), "java:S3649", &map).map(CweId::get), Some(89));
        // pattern does not match another tool
        assert_eq!(map_rule(&tool("pmd"), "java:S3649", &map), None);
    }

    #[test]
    fn bundled_rule_maps_parse() {
        for name in ["sonarqube", "pmd", "spotbugs"] {
            assert!(!RuleMap::builtin(name).unwrap().entries.is_empty());
        }
    }

    #[test]
    fn cwe_tokens() {
        assert_eq!(extract_cwe("external/cwe/cwe-089").map(CweId::get), Some(89));
        assert_eq!(extract_cwe("CWE_22 path"), extract_cwe("cwe-22"));
        assert_eq!(extract_cwe("no weakness here"), None);
        assert_eq!(extract_cwe("CWE-0"), None);
    }

    #[test]
    fn glob_patterns() {
        assert!(glob_match("sonar*", "sonarqube"));
        assert!(glob_match("*", ""));
        assert!(glob_match("*bugs", "spotbugs"));
        assert!(!glob_match("pmd", "pmd7"));
    }

    #[test]
    fn relativize_paths() {
        let root = Path::new("/work/corpus");
        assert_eq!(relativize("src/A.java", root).as_deref(), Some("src/A.java"));
        assert_eq!(relativize("file:///work/corpus/src/A%20B.java", root).as_deref(), Some("src/A B.java"));
        assert_eq!(relativize("/work/corpus/./x/../y.c", root).as_deref(), Some("y.c"));
        assert_eq!(relativize("/elsewhere/y.c", root), None);
        assert_eq!(relativize("/work/corpusX/y.c", root), None);
    }

    #[test]
    fn format_names() {
        assert_eq!("sarif".parse::<OutputFormat>().unwrap(), OutputFormat::Sarif);
        assert_eq!(
            "native:pmd-xml".parse::<OutputFormat>().unwrap(),
            OutputFormat::Native("pmd-xml".into())
        );
        assert!(matches!("bogus".parse::<OutputFormat>(), Err(Error::UnknownFormat(_))));
    }
}
