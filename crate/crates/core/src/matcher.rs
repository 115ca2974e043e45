//! Strict matching of a normalized report against a ground-truth manifest.
//!
//! Counting is per distinct flaw site and per distinct good region: several
//! findings on one site count once, and findings that land nowhere are
//! labelled extraneous and kept out of every metric.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::AddAssign;
use std::path::Path;

use rayon::prelude::*;
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::adapters::NormalizedReport;
use crate::corpus::{FlawSite, GroundTruthManifest, TestCase};
use crate::error::{Error, Result};
use crate::finding::{DedupPolicy, Finding};
use crate::taxonomy::{Taxonomy, UNCLASSIFIED};

pub const MAX_LINE_WINDOW: u32 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct MatchConfig {
    /// Extra lines of slack on both sides of a flaw span.
    pub line_window: u32,
    /// Require the finding's class to equal the case's target class.
    pub class_strict: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            line_window: 0,
            class_strict: true,
        }
    }
}

impl MatchConfig {
    pub fn new(line_window: u32, class_strict: bool) -> Result<Self> {
        let config = MatchConfig {
            line_window,
            class_strict,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.line_window > MAX_LINE_WINDOW {
            return Err(Error::InvalidConfig(format!(
                "lineWindow {} exceeds {MAX_LINE_WINDOW}",
                self.line_window
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelValue {
    #[serde(rename = "TP")]
    Tp,
    #[serde(rename = "FP")]
    Fp,
    #[serde(rename = "extraneous")]
    Extraneous,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MatchLabel {
    pub value: LabelValue,
    /// Index into the report's findings.
    pub finding_ref: usize,
    pub case_id: String,
    /// First site hit, when the window reaches several.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matched_flaw: Option<FlawSite>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Counts { tp, fp, tn, fn_ }
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        let mut total = Counts::default();
        for c in iter {
            total += c;
        }
        total
    }
}

/// Counts keyed by class label, in taxonomy order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassCounts(pub Vec<(String, Counts)>);

impl ClassCounts {
    pub fn get(&self, label: &str) -> Option<&Counts> {
        self.0.iter().find(|(l, _)| l == label).map(|(_, c)| c)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Counts)> {
        self.0.iter().map(|(l, c)| (l.as_str(), c))
    }
}

impl Serialize for ClassCounts {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (label, counts) in &self.0 {
            map.serialize_entry(label, counts)?;
        }
        map.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MatchResult {
    /// Tool name, or `a+b+...` for an ensemble.
    pub tool: String,
    /// Fingerprint of the manifest the report was judged against.
    pub manifest: String,
    pub totals: Counts,
    /// Rows in taxonomy order, then `Unclassified` when such cases exist.
    pub per_class: ClassCounts,
    pub per_case: BTreeMap<String, Counts>,
    /// Distinct non-extraneous findings under the default dedup key.
    pub detections: u64,
    pub extraneous: u64,
    /// Findings in files that belong to no case.
    pub unattributed: u64,
    pub labels: Vec<MatchLabel>,
}

/// Whether `finding` belongs to the weakness targeted by `case`.
fn in_class(finding: &Finding, case: &TestCase, taxonomy: &Taxonomy, config: &MatchConfig) -> bool {
    if !config.class_strict {
        return true;
    }
    let Some(cwe) = finding.cwe else {
        return false;
    };
    if case.is_classified() {
        taxonomy.classify(cwe).is_some_and(|c| c.label == case.target_class)
    } else {
        // no class to compare against; fall back to the exact CWE
        case.flaws.iter().any(|f| f.target_cwe == cwe)
    }
}

/// Every flaw site (by index) a finding lands in or, failing that, every
/// good region. Windows of neighbouring sites can overlap.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Hit {
    Flaw(Vec<usize>),
    Good(Vec<usize>),
    Nothing,
}

fn locate(finding: &Finding, case: &TestCase, taxonomy: &Taxonomy, config: &MatchConfig) -> Hit {
    if !in_class(finding, case, taxonomy, config) {
        return Hit::Nothing;
    }
    let loc = &finding.location;
    let w = config.line_window;
    let flaws: Vec<usize> = (0..case.flaws.len())
        .filter(|&i| {
            let f = &case.flaws[i].location;
            f.file == loc.file && f.line.saturating_sub(w) <= loc.line && loc.line <= f.last_line().saturating_add(w)
        })
        .collect();
    if !flaws.is_empty() {
        return Hit::Flaw(flaws);
    }
    let goods: Vec<usize> = (0..case.goods.len())
        .filter(|&i| {
            let g = &case.goods[i].location;
            g.file == loc.file && g.contains_line(loc.line)
        })
        .collect();
    if goods.is_empty() {
        Hit::Nothing
    } else {
        Hit::Good(goods)
    }
}

fn label_with(finding: &Finding, finding_ref: usize, case: &TestCase, taxonomy: &Taxonomy, config: &MatchConfig) -> MatchLabel {
    let (value, matched_flaw) = match locate(finding, case, taxonomy, config) {
        Hit::Flaw(i) => (LabelValue::Tp, Some(case.flaws[i[0]].clone())),
        Hit::Good(_) => (LabelValue::Fp, None),
        Hit::Nothing => (LabelValue::Extraneous, None),
    };
    MatchLabel {
        value,
        finding_ref,
        case_id: case.case_id.clone(),
        matched_flaw,
    }
}

/// Labels one finding against one case, classifying it with the default
/// taxonomy. `match_report` uses the manifest's own taxonomy instead.
pub fn label_finding(finding: &Finding, case: &TestCase, config: &MatchConfig) -> MatchLabel {
    label_with(finding, 0, case, &Taxonomy::default(), config)
}

/// Labels `finding` against `case` with an explicit taxonomy.
pub fn label_finding_in(finding: &Finding, case: &TestCase, taxonomy: &Taxonomy, config: &MatchConfig) -> MatchLabel {
    label_with(finding, 0, case, taxonomy, config)
}

fn file_index(manifest: &GroundTruthManifest) -> HashMap<&str, usize> {
    let mut index = HashMap::new();
    for (i, case) in manifest.cases.iter().enumerate() {
        for file in &case.files {
            index.entry(file.as_str()).or_insert(i);
        }
    }
    index
}

/// True when a report produced for `target` was produced for this manifest's
/// corpus: the strings agree, or both name the same directory.
pub fn target_matches(target: &str, manifest: &GroundTruthManifest) -> bool {
    if target == manifest.corpus_root {
        return true;
    }
    let a = Path::new(target).canonicalize();
    let b = manifest.root_dir().canonicalize();
    matches!((a, b), (Ok(a), Ok(b)) if a == b)
}

pub fn match_report(report: &NormalizedReport, manifest: &GroundTruthManifest, config: &MatchConfig) -> Result<MatchResult> {
    config.validate()?;
    if !target_matches(&report.target, manifest) {
        return Err(Error::TargetMismatch {
            expected: manifest.corpus_root.clone(),
            found: report.target.clone(),
        });
    }
    Ok(match_findings(&report.tool.name, &report.findings, manifest, config))
}

/// Matching without the target check, for callers that assembled the
/// findings themselves.
pub fn match_findings(tool: &str, findings: &[Finding], manifest: &GroundTruthManifest, config: &MatchConfig) -> MatchResult {
    let taxonomy = &manifest.taxonomy;
    let files = file_index(manifest);

    let located: Vec<Option<(usize, Hit)>> = findings
        .par_iter()
        .map(|f| {
            let ci = *files.get(f.location.file.as_str())?;
            Some((ci, locate(f, &manifest.cases[ci], taxonomy, config)))
        })
        .collect();

    let mut hit_flaws: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut hit_goods: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut labels = Vec::with_capacity(findings.len());
    let mut detected = BTreeSet::new();
    let mut unattributed = 0;
    let mut extraneous = 0;
    let dedup = DedupPolicy::default();

    for (i, slot) in located.into_iter().enumerate() {
        let Some((ci, hit)) = slot else {
            unattributed += 1;
            continue;
        };
        let case = &manifest.cases[ci];
        let (value, matched_flaw) = match hit {
            Hit::Flaw(sites) => {
                hit_flaws.extend(sites.iter().map(|&fi| (ci, fi)));
                (LabelValue::Tp, Some(case.flaws[sites[0]].clone()))
            }
            Hit::Good(regions) => {
                hit_goods.extend(regions.into_iter().map(|gi| (ci, gi)));
                (LabelValue::Fp, None)
            }
            Hit::Nothing => {
                extraneous += 1;
                (LabelValue::Extraneous, None)
            }
        };
        if value != LabelValue::Extraneous {
            let mut f = findings[i].clone();
            f.classify(taxonomy);
            detected.insert(dedup.key(&f));
        }
        labels.push(MatchLabel {
            value,
            finding_ref: i,
            case_id: case.case_id.clone(),
            matched_flaw,
        });
    }

    let mut per_case = BTreeMap::new();
    let mut by_class: HashMap<&str, Counts> = HashMap::new();
    for (ci, case) in manifest.cases.iter().enumerate() {
        let tp = (0..case.flaws.len()).filter(|&fi| hit_flaws.contains(&(ci, fi))).count() as u64;
        let fp = (0..case.goods.len()).filter(|&gi| hit_goods.contains(&(ci, gi))).count() as u64;
        let counts = Counts::new(tp, fp, case.goods.len() as u64 - fp, case.flaws.len() as u64 - tp);
        per_case.insert(case.case_id.clone(), counts);
        *by_class.entry(case.target_class.as_str()).or_default() += counts;
    }

    let mut per_class: Vec<(String, Counts)> = taxonomy
        .labels()
        .map(|l| (l.to_string(), by_class.get(l).copied().unwrap_or_default()))
        .collect();
    if let Some(c) = by_class.get(UNCLASSIFIED) {
        per_class.push((UNCLASSIFIED.to_string(), *c));
    }

    MatchResult {
        tool: tool.to_string(),
        manifest: manifest.fingerprint(),
        totals: per_case.values().copied().sum(),
        per_class: ClassCounts(per_class),
        per_case,
        detections: detected.len() as u64,
        extraneous,
        unattributed,
        labels,
    }
}

/// Findings whose file belongs to no case, in canonical report order.
pub fn unattributed_findings(report: &NormalizedReport, manifest: &GroundTruthManifest) -> Vec<Finding> {
    let files = file_index(manifest);
    let mut out: Vec<Finding> = report
        .findings
        .iter()
        .filter(|f| !files.contains_key(f.location.file.as_str()))
        .cloned()
        .collect();
    out.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{GoodRegion, Language};
    use crate::finding::{CweId, Severity, SourceLocation, ToolId};
    use proptest::prelude::*;

    fn loc(file: &str, line: u32, end: u32) -> SourceLocation {
        SourceLocation::new(file, line, Some(end)).unwrap()
    }

    /// Two Injection cases, each with one flaw span and two good regions.
    fn manifest() -> GroundTruthManifest {
        let case = |n: u32| TestCase {
            case_id: format!("CWE89_SQL__t_{n:02}"),
            language: Language::Java,
            target_class: "Injection".into(),
            files: vec![format!("t{n}.java")],
            flaws: vec![FlawSite {
                location: loc(&format!("t{n}.java"), 10, 20),
                target_cwe: CweId::new(89).unwrap(),
            }],
            goods: vec![
                GoodRegion {
                    location: loc(&format!("t{n}.java"), 30, 40),
                    description: "goodG2B".into(),
                },
                GoodRegion {
                    location: loc(&format!("t{n}.java"), 50, 60),
                    description: "goodB2G".into(),
                },
            ],
        };
        GroundTruthManifest::new("/corpus", "t", "1", Taxonomy::default(), vec![case(1), case(2)])
    }

    fn finding(file: &str, line: u32, cwe: u32) -> Finding {
        Finding {
            tool: ToolId::new("t", "1"),
            rule_id: format!("R{cwe}"),
            cwe: CweId::new(cwe),
            weakness_class: None,
            location: SourceLocation::new(file, line, None).unwrap(),
            message: String::new(),
            severity: Severity::Medium,
        }
    }

    fn report(findings: Vec<Finding>) -> NormalizedReport {
        NormalizedReport::new(ToolId::new("t", "1"), "/corpus", findings)
    }

    #[test]
    fn label_rules() {
        let m = manifest();
        let case = &m.cases[0];
        let cfg = MatchConfig::default();
        let tp = label_finding(&finding("t1.java", 12, 89), case, &cfg);
        assert_eq!(tp.value, LabelValue::Tp);
        assert!(tp.matched_flaw.is_some());
        assert_eq!(label_finding(&finding("t1.java", 35, 564), case, &cfg).value, LabelValue::Fp);
        assert_eq!(label_finding(&finding("t1.java", 12, 476), case, &cfg).value, LabelValue::Extraneous);
        assert_eq!(label_finding(&finding("t1.java", 2, 89), case, &cfg).value, LabelValue::Extraneous);
        let lenient = MatchConfig::new(0, false).unwrap();
        assert_eq!(label_finding(&finding("t1.java", 12, 476), case, &lenient).value, LabelValue::Tp);
    }

    #[test]
    fn line_window_widens_flaw_span() {
        let m = manifest();
        let near = finding("t1.java", 23, 89);
        assert_eq!(label_finding(&near, &m.cases[0], &MatchConfig::default()).value, LabelValue::Extraneous);
        assert_eq!(label_finding(&near, &m.cases[0], &MatchConfig::new(3, true).unwrap()).value, LabelValue::Tp);
        assert!(MatchConfig::new(51, true).is_err());
    }

    #[test]
    fn counts_are_per_site_and_region() {
        let m = manifest();
        let r = report(vec![
            finding("t1.java", 11, 89),
            finding("t1.java", 19, 89),
            finding("t1.java", 31, 89),
            finding("t1.java", 39, 89),
            finding("t2.java", 55, 89),
            finding("README.md", 1, 89),
        ]);
        let res = match_report(&r, &m, &MatchConfig::default()).unwrap();
        assert_eq!(res.totals, Counts::new(1, 2, 2, 1));
        assert_eq!(res.per_case["CWE89_SQL__t_01"], Counts::new(1, 1, 1, 0));
        assert_eq!(res.unattributed, 1);
        assert_eq!(res.detections, 5);
        assert_eq!(res.per_class.get("Injection"), Some(&res.totals));
        assert_eq!(res.per_class.0.len(), 12);
        assert_eq!(unattributed_findings(&r, &m).len(), 1);
    }

    #[test]
    fn one_finding_can_hit_overlapping_windows() {
        let mut m = manifest();
        m.cases[0].flaws.push(FlawSite {
            location: loc("t1.java", 24, 26),
            target_cwe: CweId::new(89).unwrap(),
        });
        // line 22 is past the first site and before the second; a window of 2 reaches both
        let r = report(vec![finding("t1.java", 22, 89)]);
        assert_eq!(match_report(&r, &m, &MatchConfig::default()).unwrap().totals.tp, 0);
        let res = match_report(&r, &m, &MatchConfig::new(2, true).unwrap()).unwrap();
        assert_eq!(res.totals.tp, 2);
        assert_eq!(res.detections, 1);
    }

    #[test]
    fn empty_and_saturating_reports() {
        let m = manifest();
        let empty = match_report(&report(vec![]), &m, &MatchConfig::default()).unwrap();
        assert_eq!(empty.totals, Counts::new(0, 0, 4, 2));
        let all: Vec<_> = (1..=2)
            .flat_map(|n| (1..=70).map(move |l| finding(&format!("t{n}.java"), l, 89)))
            .collect();
        let full = match_report(&report(all), &m, &MatchConfig::default()).unwrap();
        assert_eq!(full.totals, Counts::new(2, 4, 0, 0));
    }

    #[test]
    fn target_mismatch_is_an_error() {
        let mut r = report(vec![]);
        r.target = "/elsewhere".into();
        assert!(matches!(
            match_report(&r, &manifest(), &MatchConfig::default()),
            Err(Error::TargetMismatch { .. })
        ));
    }

    #[test]
    fn serializes_with_stable_field_order() {
        let res = match_report(&report(vec![finding("t1.java", 12, 89)]), &manifest(), &MatchConfig::default()).unwrap();
        let json = serde_json::to_string(&res).unwrap();
        let keys = ["\"tool\"", "\"manifest\"", "\"totals\"", "\"perClass\"", "\"perCase\"", "\"labels\""];
        let pos: Vec<_> = keys.iter().map(|k| json.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(json.contains(r#""totals":{"tp":1,"fp":0,"tn":4,"fn":1}"#));
        assert!(json.contains(r#""value":"TP""#));
    }

    /// Every finding against every region, no file index, no precedence tricks
    /// beyond "a flaw hit wins".
    fn brute_force(findings: &[Finding], m: &GroundTruthManifest) -> Counts {
        let mut flaws = BTreeSet::new();
        let mut goods = BTreeSet::new();
        let tax = &m.taxonomy;
        for f in findings {
            let class = f.cwe.and_then(|c| tax.classify(c)).map(|c| c.label.as_str());
            for (ci, case) in m.cases.iter().enumerate() {
                if class != Some(case.target_class.as_str()) {
                    continue;
                }
                let mut hit = false;
                for (fi, fl) in case.flaws.iter().enumerate() {
                    if fl.location.file == f.location.file && fl.location.contains_line(f.location.line) {
                        flaws.insert((ci, fi));
                        hit = true;
                    }
                }
                if !hit {
                    for (gi, g) in case.goods.iter().enumerate() {
                        if g.location.file == f.location.file && g.location.contains_line(f.location.line) {
                            goods.insert((ci, gi));
                        }
                    }
                }
            }
        }
        let (nf, ng) = (m.flaw_site_count() as u64, m.good_region_count() as u64);
        Counts::new(flaws.len() as u64, goods.len() as u64, ng - goods.len() as u64, nf - flaws.len() as u64)
    }

    fn arb_finding() -> impl Strategy<Value = Finding> {
        (1u32..=3, 1u32..=70, prop::sample::select(vec![89u32, 78, 476, 330]))
            .prop_map(|(n, line, cwe)| finding(&format!("t{n}.java"), line, cwe))
    }

    proptest! {
        #[test]
        fn equals_brute_force(fs in prop::collection::vec(arb_finding(), 0..40)) {
            let m = manifest();
            let res = match_findings("t", &fs, &m, &MatchConfig::default());
            prop_assert_eq!(res.totals, brute_force(&fs, &m));
            prop_assert_eq!(res.totals.tp + res.totals.fn_, 2);
        }

        #[test]
        fn monotone_and_duplicate_insensitive(fs in prop::collection::vec(arb_finding(), 0..30), extra in arb_finding()) {
            let m = manifest();
            let cfg = MatchConfig::default();
            let base = match_findings("t", &fs, &m, &cfg).totals;
            let mut more = fs.clone();
            more.push(extra);
            let grown = match_findings("t", &more, &m, &cfg).totals;
            prop_assert!(grown.tp >= base.tp && grown.fp >= base.fp);
            let doubled: Vec<_> = fs.iter().chain(fs.iter()).cloned().collect();
            prop_assert_eq!(match_findings("t", &doubled, &m, &cfg).totals, base);
        }
    }
}
