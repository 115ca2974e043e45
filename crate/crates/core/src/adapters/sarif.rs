//! SARIF 2.1.0 reader. Works on `serde_json::Value` so unknown properties
//! and producer quirks never abort ingestion.

use std::path::Path;

use serde_json::Value;

use super::{extract_cwe, map_rule, relativize, DefaultAction, Diagnostics, NormalizedReport, RuleMap};
use crate::error::{Error, Result};
use crate::finding::{Finding, Severity, SourceLocation, ToolId};

struct RuleInfo<'a> {
    id: Option<&'a str>,
    tags: Vec<&'a str>,
    level: Option<&'a str>,
    security_severity: Option<f64>,
}

fn rule_info(rule: &Value) -> RuleInfo<'_> {
    let props = &rule["properties"];
    RuleInfo {
        id: rule["id"].as_str(),
        tags: string_array(&props["tags"]),
        level: rule["defaultConfiguration"]["level"].as_str(),
        security_severity: number_or_string(&props["security-severity"]),
    }
}

fn string_array(v: &Value) -> Vec<&str> {
    v.as_array()
        .map(|a| a.iter().filter_map(Value::as_str).collect())
        .unwrap_or_default()
}

fn number_or_string(v: &Value) -> Option<f64> {
    v.as_f64().or_else(|| v.as_str().and_then(|s| s.parse().ok()))
}

fn severity(level: Option<&str>, security_severity: Option<f64>) -> Severity {
    if let Some(score) = security_severity {
        return match score {
            s if s >= 9.0 => Severity::Critical,
            s if s >= 7.0 => Severity::High,
            s if s >= 4.0 => Severity::Medium,
            s if s > 0.0 => Severity::Low,
            _ => Severity::Info,
        };
    }
    match level {
        Some("error") => Severity::High,
        Some("note") => Severity::Low,
        Some("none") => Severity::Info,
        _ => Severity::Medium,
    }
}

fn as_line(v: &Value) -> Option<u32> {
    v.as_u64().and_then(|n| u32::try_from(n).ok()).filter(|&n| n >= 1)
}

/// One finding per result with a physical location and a start line.
pub fn parse_sarif(document: &[u8], rule_map: &RuleMap, target_root: &Path) -> Result<NormalizedReport> {
    let doc: Value = serde_json::from_slice(document)
        .map_err(|e| Error::MalformedReport(format!("not a JSON document: {e}")))?;
    let runs = doc["runs"]
        .as_array()
        .filter(|r| !r.is_empty())
        .ok_or_else(|| Error::MalformedReport("SARIF log has no runs".into()))?;

    let mut tool: Option<ToolId> = None;
    let mut findings = Vec::new();
    let mut diagnostics = Diagnostics::default();
    let mut unmapped = 0;

    for run in runs {
        let driver = &run["tool"]["driver"];
        let run_tool = ToolId::new(
            driver["name"].as_str().unwrap_or("unknown"),
            driver["version"]
                .as_str()
                .or_else(|| driver["semanticVersion"].as_str())
                .unwrap_or(""),
        );
        let rules: Vec<RuleInfo> = driver["rules"]
            .as_array()
            .map(|a| a.iter().map(rule_info).collect())
            .unwrap_or_default();
        let artifacts = run["artifacts"].as_array();

        for result in run["results"].as_array().into_iter().flatten() {
            let rule = result["ruleIndex"]
                .as_u64()
                .and_then(|i| rules.get(i as usize))
                .or_else(|| {
                    let id = result["ruleId"].as_str()?;
                    rules.iter().find(|r| r.id == Some(id))
                });
            let Some(rule_id) = result["ruleId"]
                .as_str()
                .or_else(|| result["rule"]["id"].as_str())
                .or_else(|| rule.and_then(|r| r.id))
                .filter(|id| !id.is_empty())
            else {
                diagnostics.missing_rule += 1;
                continue;
            };

            let physical = &result["locations"][0]["physicalLocation"];
            let artifact = &physical["artifactLocation"];
            let uri = artifact["uri"].as_str().or_else(|| {
                let idx = artifact["index"].as_u64()? as usize;
                artifacts?.get(idx)?["location"]["uri"].as_str()
            });
            let region = &physical["region"];
            let (Some(uri), Some(line)) = (uri, as_line(&region["startLine"])) else {
                diagnostics.missing_location += 1;
                continue;
            };
            let end_line = as_line(&region["endLine"]).filter(|&e| e >= line);
            let Some(location) =
                relativize(uri, target_root).and_then(|file| SourceLocation::new(&file, line, end_line))
            else {
                diagnostics.outside_target += 1;
                continue;
            };

            let cwe = map_rule(&run_tool, rule_id, rule_map).or_else(|| {
                rule.into_iter()
                    .flat_map(|r| r.tags.iter().copied())
                    .chain(string_array(&result["properties"]["tags"]))
                    .find_map(extract_cwe)
            });
            if cwe.is_none() {
                unmapped += 1;
                if rule_map.default_action == DefaultAction::Drop {
                    diagnostics.dropped_unmapped += 1;
                    continue;
                }
            }

            let message = result["message"]["text"]
                .as_str()
                .or_else(|| result["message"]["markdown"].as_str())
                .unwrap_or("")
                .to_string();
            let level = result["level"].as_str().or(rule.and_then(|r| r.level));
            findings.push(Finding {
                tool: run_tool.clone(),
                rule_id: rule_id.to_string(),
                cwe,
                weakness_class: None,
                location,
                message,
                severity: severity(level, rule.and_then(|r| r.security_severity)),
            });
        }
        tool.get_or_insert(run_tool);
    }

    let mut report = NormalizedReport::new(
        tool.expect("at least one run"),
        target_root.to_string_lossy().replace('\\', "/"),
        findings,
    );
    report.unmapped_count = unmapped;
    report.diagnostics = diagnostics;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finding::CweId;

    fn sarif(results: &str) -> Vec<u8> {
        format!(
            r#"{{"version":"2.1.0","runs":[{{"tool":{{"driver":{{"name":"mock","version":"0.1",
            "rules":[{{"id":"R1","properties":{{"tags":["security","external/cwe/cwe-089"]}}}}]}}}},
            "results":[{results}]}}]}}"#
        )
        .into_bytes()
    }

    fn result(rule: &str, uri: &str, line: u32) -> String {
        format!(
            r#"{{"ruleId":"{rule}","level":"error","message":{{"text":"m"}},
            "locations":[{{"physicalLocation":{{"artifactLocation":{{"uri":"{uri}"}},"region":{{"startLine":{line}}}}}}}]}}"#
        )
    }

    #[test]
    fn two_mapped_results() {
        let map = RuleMap {
            entries: [("X".to_string(), CweId::new(476).unwrap())].into(),
            ..RuleMap::default()
        };
        let doc = sarif(&[result("R1", "b.c", 3), result("X", "a.c", 9)].join(","));
        let r = parse_sarif(&doc, &map, Path::new("/t")).unwrap();
        assert_eq!(r.findings.len(), 2);
        assert_eq!(r.unmapped_count, 0);
        assert_eq!(r.findings[0].location.file, "a.c");
        assert_eq!(r.findings[0].cwe.map(CweId::get), Some(476));
        assert_eq!(r.findings[1].cwe.map(CweId::get), Some(89));
        assert_eq!(r.findings[1].severity, Severity::High);
    }

    #[test]
    fn zero_results() {
        let r = parse_sarif(&sarif(""), &RuleMap::default(), Path::new("/t")).unwrap();
        assert!(r.findings.is_empty());
        assert_eq!(r.tool.name, "mock");
    }

    #[test]
    fn missing_location_is_counted() {
        let doc = sarif(r#"{"ruleId":"R1","message":{"text":"m"}}"#);
        let r = parse_sarif(&doc, &RuleMap::default(), Path::new("/t")).unwrap();
        assert!(r.findings.is_empty());
        assert_eq!(r.diagnostics.missing_location, 1);
    }

    #[test]
    fn unmapped_kept_or_dropped() {
        let doc = sarif(&result("Z9", "a.c", 1));
        let kept = parse_sarif(&doc, &RuleMap::default(), Path::new("/t")).unwrap();
        assert_eq!((kept.findings.len(), kept.unmapped_count), (1, 1));
        let drop = RuleMap {
            default_action: DefaultAction::Drop,
            ..RuleMap::default()
        };
        let dropped = parse_sarif(&doc, &drop, Path::new("/t")).unwrap();
        assert_eq!((dropped.findings.len(), dropped.unmapped_count), (0, 1));
        assert_eq!(dropped.diagnostics.dropped_unmapped, 1);
    }

    #[test]
    fn malformed_documents() {
        for doc in [&b"not json"[..], br#"{"version":"2.1.0"}"#, br#"{"runs":[]}"#] {
            assert!(matches!(
                parse_sarif(doc, &RuleMap::default(), Path::new("/t")),
                Err(Error::MalformedReport(_))
            ));
        }
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let doc = br#"{"runs":[{"tool":{"driver":{"name":"t","x-extra":[1,2]}},"invocations":[{}],
            "results":[{"ruleId":"CWE-22","kind":"fail","suppressions":[],
            "locations":[{"physicalLocation":{"artifactLocation":{"uri":"src/a.java","uriBaseId":"%SRCROOT%"},
            "region":{"startLine":4,"endLine":6,"snippet":{"text":"x"}}}}]}]}]}"#;
        let r = parse_sarif(doc, &RuleMap::default(), Path::new("/t")).unwrap();
        assert_eq!(r.findings[0].location.end_line, Some(6));
        assert_eq!(r.findings[0].cwe.map(CweId::get), Some(22));
    }
}
