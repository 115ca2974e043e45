//! Ground-truth manifests for labeled test-case corpora.

mod extent;
mod juliet;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::finding::{normalize_path, CweId, SourceLocation};
use crate::taxonomy::{Taxonomy, UNCLASSIFIED};

pub use extent::{function_extents, split_lines, FunctionExtent};
pub use juliet::{scan_juliet_layout, ScanOutcome, ScanWarning};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    C,
    Cpp,
    Java,
    Other,
}

impl std::str::FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "c" => Ok(Language::C),
            "cpp" | "c++" => Ok(Language::Cpp),
            "java" => Ok(Language::Java),
            "other" => Ok(Language::Other),
            _ => Err(format!("unknown language {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlawSite {
    #[serde(flatten)]
    pub location: SourceLocation,
    #[serde(rename = "cwe")]
    pub target_cwe: CweId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoodRegion {
    pub location: SourceLocation,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestCase {
    pub case_id: String,
    pub language: Language,
    pub target_class: String,
    pub files: Vec<String>,
    pub flaws: Vec<FlawSite>,
    pub goods: Vec<GoodRegion>,
}

impl TestCase {
    pub fn is_classified(&self) -> bool {
        self.target_class != UNCLASSIFIED
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthManifest {
    /// Root as written in the manifest. Relative roots are resolved against
    /// the directory holding the manifest file.
    pub corpus_root: String,
    pub suite_name: String,
    pub suite_version: String,
    pub cases: Vec<TestCase>,
    pub taxonomy: Taxonomy,
    resolved_root: PathBuf,
}

/// One broken manifest rule, attributed to a case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub case_id: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "case {:?}: {}", self.case_id, self.rule)
    }
}

impl GroundTruthManifest {
    pub fn new(
        corpus_root: impl Into<String>,
        suite_name: impl Into<String>,
        suite_version: impl Into<String>,
        taxonomy: Taxonomy,
        cases: Vec<TestCase>,
    ) -> Self {
        let corpus_root = corpus_root.into();
        GroundTruthManifest {
            resolved_root: PathBuf::from(&corpus_root),
            corpus_root,
            suite_name: suite_name.into(),
            suite_version: suite_version.into(),
            cases,
            taxonomy,
        }
    }

    /// Filesystem location of the corpus.
    pub fn root_dir(&self) -> &Path {
        &self.resolved_root
    }

    pub fn with_root_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.resolved_root = dir.into();
        self
    }

    pub fn flaw_site_count(&self) -> usize {
        self.cases.iter().map(|c| c.flaws.len()).sum()
    }

    pub fn good_region_count(&self) -> usize {
        self.cases.iter().map(|c| c.goods.len()).sum()
    }

    /// Stable digest identifying this manifest's content.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = self.to_json().expect("manifest serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..16].to_string()
    }

    /// Pretty JSON with stable field order and a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(&ManifestFile::from(self))?;
        text.push('\n');
        Ok(text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)
            .io_context(|| format!("writing manifest {}", path.display()))
    }

    /// Parses manifest JSON without touching the filesystem. `base` resolves a
    /// relative corpus root.
    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let file: ManifestFile =
            serde_json::from_str(text).map_err(|e| Error::MalformedManifest {
                path: base.to_path_buf(),
                reason: e.to_string(),
            })?;
        let manifest = file.into_manifest(base)?;
        let violations = validate_manifest(&manifest);
        if !violations.is_empty() {
            return Err(Error::InvariantViolation(violations));
        }
        Ok(manifest)
    }
}

/// Reads, validates and checks a manifest against the files on disk.
pub fn load_manifest(path: &Path) -> Result<GroundTruthManifest> {
    let text = std::fs::read_to_string(path)
        .io_context(|| format!("reading manifest {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let manifest = GroundTruthManifest::from_json(&text, base).map_err(|e| match e {
        Error::MalformedManifest { reason, .. } => Error::MalformedManifest {
            path: path.to_path_buf(),
            reason,
        },
        other => other,
    })?;
    let root = manifest.root_dir();
    let missing: Vec<String> = manifest
        .cases
        .iter()
        .flat_map(|c| c.files.iter())
        .filter(|f| !root.join(f).is_file())
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }
    Ok(manifest)
}

pub fn validate_manifest(manifest: &GroundTruthManifest) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen_ids = HashSet::new();
    let mut file_owner: HashMap<&str, &str> = HashMap::new();
    let known_class = |label: &str| {
        label == UNCLASSIFIED || manifest.taxonomy.class_by_label(label).is_some()
    };

    for case in &manifest.cases {
        let mut violate = |rule: String| {
            out.push(Violation {
                case_id: case.case_id.clone(),
                rule,
            })
        };
        if !seen_ids.insert(case.case_id.as_str()) {
            violate("duplicate caseId".into());
        }

        if case.flaws.is_empty() {
            violate("case has no flaw sites".into());
        }
        if !known_class(&case.target_class) {
            violate(format!("targetClass {:?} is not in the taxonomy", case.target_class));
        }
        for file in &case.files {
            if normalize_path(file).as_deref() != Some(file.as_str()) {
                violate(format!("file path {file:?} is not normalized"));
            }
            match file_owner.insert(file, &case.case_id) {
                Some(other) if other != case.case_id => {
                    violate(format!("file {file:?} is shared with case {other:?}"))
                }
                _ => {}
            }
        }
        for flaw in &case.flaws {
            if !case.files.contains(&flaw.location.file) {
                violate(format!("flaw file {:?} is not one of the case files", flaw.location.file));
            }
            let label = manifest.taxonomy.target_label(flaw.target_cwe);
            if label != case.target_class {
                violate(format!(
                    "flaw {} classifies as {label:?}, not targetClass {:?}",
                    flaw.target_cwe, case.target_class
                ));
            }
        }
        for good in &case.goods {
            if !case.files.contains(&good.location.file) {
                violate(format!("good region file {:?} is not one of the case files", good.location.file));
            }
            if good.location.end_line.is_none() {
                violate(format!(
                    "good region at {}:{} has no endLine",
                    good.location.file, good.location.line
                ));
            }
            let overlaps = case.flaws.iter().any(|flaw| {
                flaw.location.file == good.location.file
                    && flaw.location.line <= good.location.last_line()
                    && good.location.line <= flaw.location.last_line()
            });
            if overlaps {
                violate(format!(
                    "good region {}:{}-{} overlaps a flaw site",
                    good.location.file,
                    good.location.line,
                    good.location.last_line()
                ));
            }
        }
    }
    out
}

// Wire format.

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct ManifestFile {
    suite_name: String,
    suite_version: String,
    corpus_root: String,
    taxonomy: TaxonomyRef,
    cases: Vec<CaseFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TaxonomyRef {
    Named(String),
    Inline(Taxonomy),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct CaseFile {
    case_id: String,
    language: Language,
    target_class: String,
    files: Vec<String>,
    flaws: Vec<FlawFile>,
    #[serde(default)]
    goods: Vec<GoodFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct FlawFile {
    file: String,
    line: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    end_line: Option<u32>,
    cwe: CweId,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct GoodFile {
    file: String,
    line: u32,
    end_line: Option<u32>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    description: String,
}

impl From<&GroundTruthManifest> for ManifestFile {
    fn from(m: &GroundTruthManifest) -> Self {
        let builtin = Taxonomy::builtin(m.taxonomy.name()).ok();
        let taxonomy = if builtin.as_ref() == Some(&m.taxonomy) {
            TaxonomyRef::Named(m.taxonomy.name().to_string())
        } else {
            TaxonomyRef::Inline(m.taxonomy.clone())
        };
        ManifestFile {
            suite_name: m.suite_name.clone(),
            suite_version: m.suite_version.clone(),
            corpus_root: m.corpus_root.clone(),
            taxonomy,
            cases: m
                .cases
                .iter()
                .map(|c| CaseFile {
                    case_id: c.case_id.clone(),
                    language: c.language,
                    target_class: c.target_class.clone(),
                    files: c.files.clone(),
                    flaws: c
                        .flaws
                        .iter()
                        .map(|f| FlawFile {
                            file: f.location.file.clone(),
                            line: f.location.line,
                            end_line: f.location.end_line,
                            cwe: f.target_cwe,
                        })
                        .collect(),
                    goods: c
                        .goods
                        .iter()
                        .map(|g| GoodFile {
                            file: g.location.file.clone(),
                            line: g.location.line,
                            end_line: g.location.end_line,
                            description: g.description.clone(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

impl ManifestFile {
    fn into_manifest(self, base: &Path) -> Result<GroundTruthManifest> {
        let taxonomy = match self.taxonomy {
            TaxonomyRef::Named(name) => Taxonomy::builtin(&name)?,
            TaxonomyRef::Inline(t) => t,
        };
        let mut violations = Vec::new();
        let mut cases = Vec::with_capacity(self.cases.len());
        for c in self.cases {
            let mut bad_location = |file: &str, line: u32| {
                violations.push(Violation {
                    case_id: c.case_id.clone(),
                    rule: format!("invalid location {file}:{line}"),
                })
            };
            let mut flaws = Vec::new();
            for f in &c.flaws {
                match SourceLocation::new(&f.file, f.line, f.end_line) {
                    Some(location) => flaws.push(FlawSite {
                        location,
                        target_cwe: f.cwe,
                    }),
                    None => bad_location(&f.file, f.line),
                }
            }
            let mut goods = Vec::new();
            for g in &c.goods {
                match SourceLocation::new(&g.file, g.line, g.end_line) {
                    Some(location) => goods.push(GoodRegion {
                        location,
                        description: g.description.clone(),
                    }),
                    None => bad_location(&g.file, g.line),
                }
            }
            cases.push(TestCase {
                case_id: c.case_id,
                language: c.language,
                target_class: c.target_class,
                files: c.files,
                flaws,
                goods,
            });
        }
        if !violations.is_empty() {
            return Err(Error::InvariantViolation(violations));
        }
        let root = Path::new(&self.corpus_root);
        let resolved_root = if root.is_absolute() {
            root.to_path_buf()
        } else {
            base.join(root)
        };
        Ok(GroundTruthManifest {
            corpus_root: self.corpus_root,
            suite_name: self.suite_name,
            suite_version: self.suite_version,
            cases,
            taxonomy,
            resolved_root,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case_json(id: &str, class: &str, cwe: u32) -> String {
        format!(
            r#"{{"caseId":"{id}","language":"java","targetClass":"{class}","files":["{id}.java"],
               "flaws":[{{"file":"{id}.java","line":10,"endLine":20,"cwe":{cwe}}}],
               "goods":[{{"file":"{id}.java","line":22,"endLine":30}}]}}"#
        )
    }

    fn manifest_json(cases: &[String]) -> String {
        format!(
            r#"{{"suiteName":"s","suiteVersion":"1.3","corpusRoot":".","taxonomy":"weakness-12","cases":[{}]}}"#,
            cases.join(",")
        )
    }

    #[test]
    fn empty_case_list_is_valid() {
        let m = GroundTruthManifest::from_json(&manifest_json(&[]), Path::new(".")).unwrap();
        assert!(m.cases.is_empty());
    }

    #[test]
    fn flaw_outside_target_class_is_reported() {
        let text = manifest_json(&[case_json("CWE89_x_01", "Number Handling", 89)]);
        match GroundTruthManifest::from_json(&text, Path::new(".")) {
            Err(Error::InvariantViolation(v)) => {
                assert_eq!(v.len(), 1);
                assert_eq!(v[0].case_id, "CWE89_x_01");
            }
            other => panic!("expected invariant violation, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_case_id_is_one_violation() {
        let c = case_json("A", "Injection", 89);
        let m = GroundTruthManifest::from_json(&manifest_json(&[c]), Path::new(".")).unwrap();
        let mut dup = m.clone();
        let mut copy = dup.cases[0].clone();
        copy.files = vec!["B.java".into()];
        copy.flaws[0].location.file = "B.java".into();
        copy.goods[0].location.file = "B.java".into();
        dup.cases.push(copy);
        let v = validate_manifest(&dup);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].rule, "duplicate caseId");
    }

    #[test]
    fn overlapping_good_region_is_one_violation() {
        let c = case_json("A", "Injection", 89);
        let mut m = GroundTruthManifest::from_json(&manifest_json(&[c]), Path::new(".")).unwrap();
        assert!(validate_manifest(&m).is_empty());
        m.cases[0].goods[0].location.line = 15;
        let v = validate_manifest(&m);
        assert_eq!(v.len(), 1);
        assert!(v[0].rule.contains("overlaps"));
    }

    #[test]
    fn unknown_taxonomy_name_fails() {
        let text = manifest_json(&[]).replace("weakness-12", "nope");
        assert!(matches!(
            GroundTruthManifest::from_json(&text, Path::new(".")),
            Err(Error::UnknownTaxonomy(_))
        ));
    }

    #[test]
    fn garbage_is_malformed() {
        assert!(matches!(
            GroundTruthManifest::from_json("{", Path::new(".")),
            Err(Error::MalformedManifest { .. })
        ));
    }

    #[test]
    fn missing_files_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, manifest_json(&[case_json("A", "Injection", 89)])).unwrap();
        match load_manifest(&path) {
            Err(Error::MissingFiles(files)) => assert_eq!(files, vec!["A.java".to_string()]),
            other => panic!("{other:?}"),
        }
        std::fs::write(dir.path().join("A.java"), "x\n").unwrap();
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.root_dir(), dir.path().join("."));
    }

    #[test]
    fn inline_taxonomy_roundtrip() {
        let tax = Taxonomy::from_json(
            r#"{"name":"custom","classes":[{"classId":"X","label":"Injection","cwes":[89]}]}"#,
        )
        .unwrap();
        let m = GroundTruthManifest::from_json(
            &manifest_json(&[case_json("A", "Injection", 89)]),
            Path::new("."),
        )
        .unwrap();
        let m = GroundTruthManifest { taxonomy: tax, ..m };
        let back = GroundTruthManifest::from_json(&m.to_json().unwrap(), Path::new(".")).unwrap();
        assert_eq!(back, m);
    }
}
