//! Plug-in parsers for tool-native report formats.

use std::path::Path;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{map_rule, relativize, DefaultAction, Diagnostics, NormalizedReport, RuleMap};
use crate::error::{Error, Result};
use crate::finding::{CweId, Finding, Severity, SourceLocation, ToolId};

pub trait NativeParser: Send + Sync {
    fn name(&self) -> &'static str;
    fn parse(&self, document: &[u8], rule_map: &RuleMap, target_root: &Path) -> Result<NormalizedReport>;
}

pub static NATIVE_PARSERS: &[&dyn NativeParser] = &[&PmdXml, &SpotBugsXml, &Jsonl];

pub fn native_parser(name: &str) -> Option<&'static dyn NativeParser> {
    NATIVE_PARSERS.iter().copied().find(|p| p.name() == name)
}

/// Accumulates raw entries and applies the shared mapping rules.
struct Collector<'a> {
    tool: ToolId,
    rule_map: &'a RuleMap,
    target_root: &'a Path,
    findings: Vec<Finding>,
    diagnostics: Diagnostics,
    unmapped: usize,
}

struct RawEntry {
    rule_id: String,
    file: Option<String>,
    line: Option<u32>,
    end_line: Option<u32>,
    declared_cwe: Option<CweId>,
    message: String,
    severity: Severity,
}

impl<'a> Collector<'a> {
    fn new(tool: ToolId, rule_map: &'a RuleMap, target_root: &'a Path) -> Self {
        Collector {
            tool,
            rule_map,
            target_root,
            findings: Vec::new(),
            diagnostics: Diagnostics::default(),
            unmapped: 0,
        }
    }

    fn push(&mut self, e: RawEntry) {
        if e.rule_id.is_empty() {
            self.diagnostics.missing_rule += 1;
            return;
        }
        let (Some(file), Some(line)) = (e.file, e.line) else {
            self.diagnostics.missing_location += 1;
            return;
        };
        let end_line = e.end_line.filter(|&end| end >= line);
        let Some(location) =
            relativize(&file, self.target_root).and_then(|f| SourceLocation::new(&f, line, end_line))
        else {
            self.diagnostics.outside_target += 1;
            return;
        };
        let cwe = map_rule(&self.tool, &e.rule_id, self.rule_map).or(e.declared_cwe);
        if cwe.is_none() {
            self.unmapped += 1;
            if self.rule_map.default_action == DefaultAction::Drop {
                self.diagnostics.dropped_unmapped += 1;
                return;
            }
        }
        self.findings.push(Finding {
            tool: self.tool.clone(),
            rule_id: e.rule_id,
            cwe,
            weakness_class: None,
            location,
            message: e.message.trim().to_string(),
            severity: e.severity,
        });
    }

    fn finish(self) -> NormalizedReport {
        let mut report = NormalizedReport::new(
            self.tool,
            self.target_root.to_string_lossy().replace('\\', "/"),
            self.findings,
        );
        report.unmapped_count = self.unmapped;
        report.diagnostics = self.diagnostics;
        report
    }
}

fn attr(e: &BytesStart<'_>, name: &str) -> Option<String> {
    e.attributes()
        .flatten()
        .find(|a| a.key.as_ref() == name.as_bytes())
        .and_then(|a| a.unescape_value().ok().map(|v| v.into_owned()))
}

fn attr_u32(e: &BytesStart<'_>, name: &str) -> Option<u32> {
    attr(e, name).and_then(|v| v.trim().parse().ok()).filter(|&n| n >= 1)
}

fn xml_error(e: quick_xml::Error) -> Error {
    Error::MalformedReport(format!("invalid XML: {e}"))
}

/// PMD `<pmd><file name=".."><violation ..>message</violation></file></pmd>`.
pub struct PmdXml;

impl NativeParser for PmdXml {
    fn name(&self) -> &'static str {
        "pmd-xml"
    }

    fn parse(&self, document: &[u8], rule_map: &RuleMap, target_root: &Path) -> Result<NormalizedReport> {
        let mut reader = Reader::from_reader(document);
        let mut buf = Vec::new();
        let mut collector: Option<Collector> = None;
        let mut file: Option<String> = None;
        let mut current: Option<RawEntry> = None;
        loop {
            match reader.read_event_into(&mut buf).map_err(xml_error)? {
                Event::Start(e) | Event::Empty(e) if e.name().as_ref() == b"pmd" => {
                    let version = attr(&e, "version").unwrap_or_default();
                    collector = Some(Collector::new(ToolId::new("pmd", version), rule_map, target_root));
                }
                Event::Start(e) if e.name().as_ref() == b"file" => file = attr(&e, "name"),
                Event::Start(e) if e.name().as_ref() == b"violation" => {
                    let severity = match attr_u32(&e, "priority") {
                        Some(1) => Severity::High,
                        Some(2) | Some(3) => Severity::Medium,
                        Some(4) => Severity::Low,
                        Some(_) => Severity::Info,
                        None => Severity::Medium,
                    };
                    current = Some(RawEntry {
                        rule_id: attr(&e, "rule").unwrap_or_default(),
                        file: file.clone(),
                        line: attr_u32(&e, "beginline"),
                        end_line: attr_u32(&e, "endline"),
                        declared_cwe: None,
                        message: String::new(),
                        severity,
                    });
                }
                Event::Text(t) => {
                    if let Some(entry) = current.as_mut() {
                        entry.message.push_str(&t.unescape().map_err(xml_error)?);
                    }
                }
                Event::End(e) if e.name().as_ref() == b"violation" => {
                    if let (Some(c), Some(entry)) = (collector.as_mut(), current.take()) {
                        c.push(entry);
                    }
                }
                Event::End(e) if e.name().as_ref() == b"file" => file = None,
                Event::Eof => break,
                _ => {}
            }
            buf.clear();
        }
        collector
            .map(Collector::finish)
            .ok_or_else(|| Error::MalformedReport("no <pmd> root element".into()))
    }
}

/// SpotBugs `<BugCollection>` XML. The location is the bug's own
/// `<SourceLine>`, falling back to the method's, then the class's.
pub struct SpotBugsXml;

impl NativeParser for SpotBugsXml {
    fn name(&self) -> &'static str {
        "spotbugs-xml"
    }

    fn parse(&self, document: &[u8], rule_map: &RuleMap, target_root: &Path) -> Result<NormalizedReport> {
        let mut reader = Reader::from_reader(document);
        let mut buf = Vec::new();
        let mut collector: Option<Collector> = None;
        let mut src_dir_prefix: Option<String> = None;
        let mut in_src_dir = false;
        let mut bug: Option<RawEntry> = None;
        // (priority, file, start, end); lower priority wins
        let mut best_line: Option<(u8, String, Option<u32>, Option<u32>)> = None;
        let mut parents: Vec<Vec<u8>> = Vec::new();
        let mut in_message = false;

        loop {
            let event = reader.read_event_into(&mut buf).map_err(xml_error)?;
            match &event {
                Event::Start(e) | Event::Empty(e) => {
                    let name = e.name().as_ref().to_vec();
                    match name.as_slice() {
                        b"BugCollection" => {
                            let version = attr(e, "version").unwrap_or_default();
                            collector =
                                Some(Collector::new(ToolId::new("spotbugs", version), rule_map, target_root));
                        }
                        b"SrcDir" => in_src_dir = true,
                        b"BugInstance" => {
                            let severity = match attr_u32(e, "priority") {
                                Some(1) => Severity::High,
                                Some(2) => Severity::Medium,
                                _ => Severity::Low,
                            };
                            bug = Some(RawEntry {
                                rule_id: attr(e, "type").unwrap_or_default(),
                                file: None,
                                line: None,
                                end_line: None,
                                declared_cwe: attr_u32(e, "cweid").and_then(CweId::new),
                                message: String::new(),
                                severity,
                            });
                            best_line = None;
                        }
                        b"LongMessage" if bug.is_some() => in_message = true,
                        b"SourceLine" if bug.is_some() => {
                            let rank = match parents.last().map(Vec::as_slice) {
                                Some(b"BugInstance") => 0,
                                Some(b"Method") => 1,
                                _ => 2,
                            };
                            if let Some(path) = attr(e, "sourcepath") {
                                if best_line.as_ref().is_none_or(|(r, ..)| rank < *r) {
                                    let path = match &src_dir_prefix {
                                        Some(prefix) => format!("{prefix}/{path}"),
                                        None => path,
                                    };
                                    best_line = Some((rank, path, attr_u32(e, "start"), attr_u32(e, "end")));
                                }
                            }
                        }
                        _ => {}
                    }
                    if matches!(event, Event::Start(_)) {
                        parents.push(name);
                    }
                }
                Event::Text(t) => {
                    let text = t.unescape().map_err(xml_error)?;
                    if in_src_dir && src_dir_prefix.is_none() {
                        src_dir_prefix = relativize(text.trim(), target_root);
                    } else if in_message {
                        if let Some(b) = bug.as_mut() {
                            b.message.push_str(&text);
                        }
                    }
                }
                Event::End(e) => {
                    parents.pop();
                    match e.name().as_ref() {
                        b"SrcDir" => in_src_dir = false,
                        b"LongMessage" => in_message = false,
                        b"BugInstance" => {
                            if let (Some(c), Some(mut entry)) = (collector.as_mut(), bug.take()) {
                                if let Some((_, file, start, end)) = best_line.take() {
                                    entry.file = Some(file);
                                    entry.line = start;
                                    entry.end_line = end;
                                }
                                c.push(entry);
                            }
                        }
                        _ => {}
                    }
                }
                Event::Eof => break,
                _ => {}
            }
            buf.clear();
        }
        collector
            .map(Collector::finish)
            .ok_or_else(|| Error::MalformedReport("no <BugCollection> root element".into()))
    }
}

/// Previously normalized JSONL, replayed as-is.
pub struct Jsonl;

impl NativeParser for Jsonl {
    fn name(&self) -> &'static str {
        "jsonl"
    }

    fn parse(&self, document: &[u8], _rule_map: &RuleMap, target_root: &Path) -> Result<NormalizedReport> {
        let text = std::str::from_utf8(document)
            .map_err(|e| Error::MalformedReport(format!("JSONL is not UTF-8: {e}")))?;
        NormalizedReport::from_jsonl(text, &target_root.to_string_lossy(), "unknown")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pmd_report() {
        let xml = br#"<?xml version="1.0" encoding="UTF-8"?>
<pmd xmlns="http://pmd.sourceforge.net/report/2.0.0" version="6.55.0" timestamp="2024-01-01T00:00:00">
<file name="/src/proj/src/Foo.java">
<violation beginline="12" endline="14" begincolumn="5" endcolumn="6" rule="EmptyCatchBlock" ruleset="Error Prone" priority="3">
Avoid empty catch blocks
</violation>
<violation beginline="20" endline="20" rule="SomethingElse" priority="5">x &amp; y</violation>
</file>
</pmd>"#;
        let r = PmdXml
            .parse(xml, &RuleMap::builtin("pmd").unwrap(), Path::new("/src/proj"))
            .unwrap();
        assert_eq!(r.tool, ToolId::new("pmd", "6.55.0"));
        assert_eq!(r.findings.len(), 2);
        let f = &r.findings[0];
        assert_eq!((f.location.file.as_str(), f.location.line, f.location.end_line), ("src/Foo.java", 12, Some(14)));
        assert_eq!(f.cwe.map(CweId::get), Some(390));
        assert_eq!(f.message, "Avoid empty catch blocks");
        assert_eq!(r.findings[1].message, "x & y");
        assert_eq!(r.unmapped_count, 1);
    }

    #[test]
    fn spotbugs_report() {
        let xml = br#"<BugCollection version="4.8.3">
<Project projectName="p"><SrcDir>/w/proj/src/main/java</SrcDir></Project>
<BugInstance type="NP_ALWAYS_NULL" priority="1" cweid="476" category="CORRECTNESS">
  <LongMessage>Null pointer dereference of s</LongMessage>
  <Class classname="a.B"><SourceLine classname="a.B" start="1" end="90" sourcepath="a/B.java"/></Class>
  <Method classname="a.B" name="m"><SourceLine classname="a.B" start="10" end="20" sourcepath="a/B.java"/></Method>
  <SourceLine classname="a.B" start="14" end="14" sourcepath="a/B.java" primary="true"/>
</BugInstance>
<BugInstance type="UNKNOWN_THING" priority="3">
  <Class classname="a.C"><SourceLine classname="a.C" start="3" end="9" sourcepath="a/C.java"/></Class>
</BugInstance>
<BugInstance type="NO_LINES" priority="2"><Class classname="a.D"/></BugInstance>
</BugCollection>"#;
        let r = SpotBugsXml
            .parse(xml, &RuleMap::builtin("spotbugs").unwrap(), Path::new("/w/proj"))
            .unwrap();
        assert_eq!(r.findings.len(), 2);
        let np = r.findings.iter().find(|f| f.rule_id == "NP_ALWAYS_NULL").unwrap();
        assert_eq!(np.location.file, "src/main/java/a/B.java");
        assert_eq!(np.location.line, 14);
        assert_eq!(np.cwe.map(CweId::get), Some(476));
        assert_eq!(np.severity, Severity::High);
        let other = r.findings.iter().find(|f| f.rule_id == "UNKNOWN_THING").unwrap();
        assert_eq!(other.location.line, 3);
        assert_eq!(other.cwe, None);
        assert_eq!(r.diagnostics.missing_location, 1);
    }

    #[test]
    fn wrong_root_is_malformed() {
        assert!(PmdXml.parse(b"<other/>", &RuleMap::default(), Path::new("/")).is_err());
        assert!(SpotBugsXml.parse(b"<a><b></a>", &RuleMap::default(), Path::new("/")).is_err());
    }
}
