//! Weakness classes: groups of CWE ids that form the rows of per-class scorecards.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::finding::CweId;

pub const DEFAULT_TAXONOMY: &str = "weakness-12";
pub const ALT_TAXONOMY: &str = "weakness-12-alt";
/// Target class of corpus cases whose CWE belongs to no taxonomy class.
pub const UNCLASSIFIED: &str = "Unclassified";

const BUILTINS: &[(&str, &str)] = &[
    (DEFAULT_TAXONOMY, include_str!("../data/weakness-12.json")),
    (ALT_TAXONOMY, include_str!("../data/weakness-12-alt.json")),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeaknessClass {
    #[serde(rename = "classId")]
    pub class_id: String,
    pub label: String,
    #[serde(rename = "cwes")]
    pub member_cwes: BTreeSet<CweId>,
}

/// Ordered list of weakness classes with pairwise-disjoint CWE membership.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "TaxonomyFile", into = "TaxonomyFile")]
pub struct Taxonomy {
    name: String,
    classes: Vec<WeaknessClass>,
    index: HashMap<CweId, usize>,
}

#[derive(Serialize, Deserialize)]
struct TaxonomyFile {
    name: String,
    classes: Vec<WeaknessClass>,
}

impl TryFrom<TaxonomyFile> for Taxonomy {
    type Error = Error;

    fn try_from(file: TaxonomyFile) -> Result<Self> {
        Taxonomy::new(file.name, file.classes)
    }
}

impl From<Taxonomy> for TaxonomyFile {
    fn from(t: Taxonomy) -> Self {
        TaxonomyFile {
            name: t.name,
            classes: t.classes,
        }
    }
}

impl PartialEq for Taxonomy {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.classes == other.classes
    }
}

impl Eq for Taxonomy {}

impl Taxonomy {
    pub fn new(name: impl Into<String>, classes: Vec<WeaknessClass>) -> Result<Self> {
        let name = name.into();
        let mut ids = HashSet::new();
        let mut labels = HashSet::new();
        let mut index = HashMap::new();
        for (i, class) in classes.iter().enumerate() {
            if !ids.insert(class.class_id.as_str()) {
                return Err(Error::InvalidTaxonomy(format!(
                    "duplicate class id {}",
                    class.class_id
                )));
            }
            if !labels.insert(class.label.as_str()) || class.label == UNCLASSIFIED {
                return Err(Error::InvalidTaxonomy(format!(
                    "duplicate or reserved class label {:?}",
                    class.label
                )));
            }
            for &cwe in &class.member_cwes {
                if let Some(prev) = index.insert(cwe, i) {
                    return Err(Error::InvalidTaxonomy(format!(
                        "{cwe} belongs to both {:?} and {:?}",
                        classes[prev].label, class.label
                    )));
                }
            }
        }
        Ok(Taxonomy {
            name,
            classes,
            index,
        })
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let (_, text) = BUILTINS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::UnknownTaxonomy(name.to_string()))?;
        Taxonomy::from_json(text)
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTINS.iter().map(|(n, _)| *n)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TaxonomyFile = serde_json::from_str(text)?;
        Taxonomy::try_from(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .io_context(|| format!("reading taxonomy {}", path.display()))?;
        Taxonomy::from_json(&text)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn classes(&self) -> &[WeaknessClass] {
        &self.classes
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().map(|c| c.label.as_str())
    }

    pub fn class_by_label(&self, label: &str) -> Option<&WeaknessClass> {
        self.classes.iter().find(|c| c.label == label)
    }

    pub fn classify(&self, cwe: CweId) -> Option<&WeaknessClass> {
        self.index.get(&cwe).map(|&i| &self.classes[i])
    }

    /// Label a case targeting `cwe` is filed under.
    pub fn target_label(&self, cwe: CweId) -> &str {
        self.classify(cwe).map_or(UNCLASSIFIED, |c| c.label.as_str())
    }
}

impl Default for Taxonomy {
    fn default() -> Self {
        Taxonomy::builtin(DEFAULT_TAXONOMY).expect("bundled taxonomy is valid")
    }
}

pub fn classify_cwe(cwe: CweId, taxonomy: &Taxonomy) -> Option<&WeaknessClass> {
    taxonomy.classify(cwe)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cwe(n: u32) -> CweId {
        CweId::new(n).unwrap()
    }

    #[test]
    fn default_taxonomy_examples() {
        let t = Taxonomy::default();
        assert_eq!(t.classes().len(), 12);
        let expected = [
            (285, "Authentication and Access Control"),
            (120, "Buffer Handling (C/C++ only)"),
            (561, "Code Quality"),
            (705, "Control Flow Management"),
            (328, "Encryption and Randomness"),
            (755, "Error Handling"),
            (23, "File Handling"),
            (534, "Information Leaks"),
            (564, "Injection"),
            (506, "Malicious Logic"),
            (369, "Number Handling"),
            (476, "Pointer and Reference Handling"),
        ];
        for (id, label) in expected {
            assert_eq!(classify_cwe(cwe(id), &t).map(|c| c.label.as_str()), Some(label), "CWE-{id}");
        }
        assert!(classify_cwe(cwe(99999), &t).is_none());
    }

    #[test]
    fn alternate_taxonomy_row_set() {
        let t = Taxonomy::builtin(ALT_TAXONOMY).unwrap();
        let labels: Vec<_> = t.labels().collect();
        assert_eq!(labels.len(), 12);
        assert!(labels.contains(&"Initialization and Shutdown"));
        assert!(labels.contains(&"X-Injection"));
        assert!(!labels.iter().any(|l| l.starts_with("Buffer")));
        assert_eq!(t.classify(cwe(89)).unwrap().label, "X-Injection");
        assert_eq!(t.classify(cwe(401)).unwrap().label, "Initialization and Shutdown");
    }

    #[test]
    fn overlapping_membership_rejected() {
        let json = r#"{"name":"bad","classes":[
            {"classId":"A","label":"A","cwes":[1,2]},
            {"classId":"B","label":"B","cwes":[2]}]}"#;
        assert!(matches!(Taxonomy::from_json(json), Err(Error::InvalidTaxonomy(_))));
    }

    #[test]
    fn duplicate_labels_rejected() {
        let json = r#"{"name":"bad","classes":[
            {"classId":"A","label":"X","cwes":[1]},
            {"classId":"B","label":"X","cwes":[2]}]}"#;
        assert!(Taxonomy::from_json(json).is_err());
    }

    #[test]
    fn roundtrips_through_json() {
        let t = Taxonomy::default();
        let back = Taxonomy::from_json(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(back, t);
    }
}
