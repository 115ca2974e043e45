use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::Serialize;

use super::extent::function_extents;
use super::{FlawSite, GoodRegion, GroundTruthManifest, Language, TestCase};
use crate::error::{Error, Result};
use crate::finding::{CweId, SourceLocation};
use crate::taxonomy::Taxonomy;

static CWE_PREFIX: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^CWE(\d+)_").unwrap());
// `<prefix>_NN` followed by an optional file-part suffix (`a`, `_bad`, `_goodG2B`).
static CASE_STEM: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(CWE\d+_.+_\d+)(?:[a-z]|_[a-z]|_(?:bad|good)\w*)?$").unwrap()
});

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScanWarning {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ScanOutcome {
    pub manifest: GroundTruthManifest,
    pub warnings: Vec<ScanWarning>,
}

fn language_of(path: &Path) -> Option<Option<Language>> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    match ext.as_str() {
        "c" => Some(Some(Language::C)),
        "cpp" | "cc" | "cxx" => Some(Some(Language::Cpp)),
        "java" => Some(Some(Language::Java)),
        // headers join a case but never decide its language
        "h" | "hpp" => Some(None),
        _ => None,
    }
}

fn case_id_of(stem: &str) -> String {
    CASE_STEM
        .captures(stem)
        .and_then(|c| c.get(1))
        .map_or_else(|| stem.to_string(), |m| m.as_str().to_string())
}

struct SourceFile {
    rel: String,
    language: Option<Language>,
    case_id: String,
    cwe: CweId,
}

/// Builds a manifest from a Juliet-style tree: one case per file group, flaw
/// sites from functions named `*bad*`, good regions from functions named
/// `*good*`. `languages` empty means all.
pub fn scan_juliet_layout(
    root: &Path,
    languages: &BTreeSet<Language>,
    taxonomy: &Taxonomy,
) -> Result<ScanOutcome> {
    if !root.is_dir() {
        return Err(Error::io(
            format!("scanning {}", root.display()),
            std::io::Error::new(std::io::ErrorKind::NotFound, "corpus root is not a directory"),
        ));
    }
    let mut warnings = Vec::new();
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                warnings.push(ScanWarning {
                    path: e.path().map(|p| p.display().to_string()).unwrap_or_default(),
                    message: e.to_string(),
                });
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let path = entry.path();
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let Some(cwe) = CWE_PREFIX
            .captures(stem)
            .and_then(|c| c[1].parse().ok())
            .and_then(CweId::new)
        else {
            continue;
        };
        let Some(language) = language_of(path) else {
            continue;
        };
        if let Some(lang) = language {
            if !languages.is_empty() && !languages.contains(&lang) {
                continue;
            }
        }
        let rel: PathBuf = path.strip_prefix(root).unwrap_or(path).to_path_buf();
        let rel = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        files.push(SourceFile {
            rel,
            language,
            case_id: case_id_of(stem),
            cwe,
        });
    }

    let extents: Vec<_> = files
        .par_iter()
        .map(|f| {
            std::fs::read(root.join(&f.rel))
                .map(|bytes| function_extents(&String::from_utf8_lossy(&bytes)))
                .map_err(|e| e.to_string())
        })
        .collect();

    let mut groups: BTreeMap<String, Vec<(SourceFile, Vec<_>)>> = BTreeMap::new();
    for (file, ext) in files.into_iter().zip(extents) {
        match ext {
            Ok(ext) => groups.entry(file.case_id.clone()).or_default().push((file, ext)),
            Err(message) => warnings.push(ScanWarning {
                path: file.rel,
                message,
            }),
        }
    }

    let mut cases = Vec::new();
    for (case_id, members) in groups {
        // headers alone do not make a case in a filtered language
        let langs: BTreeSet<Language> = members.iter().filter_map(|(f, _)| f.language).collect();
        let language = if langs.contains(&Language::Cpp) {
            Language::Cpp
        } else if let Some(&l) = langs.iter().next() {
            l
        } else {
            continue;
        };
        let cwe = members[0].0.cwe;
        let mut case_files = Vec::new();
        let mut flaws = Vec::new();
        let mut goods = Vec::new();
        for (file, extents) in &members {
            case_files.push(file.rel.clone());
            for ext in extents {
                let lower = ext.name.to_ascii_lowercase();
                let location = SourceLocation::new(&file.rel, ext.start_line, Some(ext.end_line))
                    .expect("extents are ordered");
                if lower.contains("bad") {
                    flaws.push(FlawSite {
                        location,
                        target_cwe: cwe,
                    });
                } else if lower.contains("good") {
                    goods.push(GoodRegion {
                        location,
                        description: ext.name.clone(),
                    });
                }
            }
        }
        if flaws.is_empty() {
            warnings.push(ScanWarning {
                path: case_files.join(","),
                message: format!("case {case_id} has no bad function; dropped"),
            });
            continue;
        }
        case_files.sort();
        flaws.sort_by(|a, b| a.location.cmp(&b.location));
        goods.sort_by(|a, b| a.location.cmp(&b.location));
        cases.push(TestCase {
            target_class: taxonomy.target_label(cwe).to_string(),
            case_id,
            language,
            files: case_files,
            flaws,
            goods,
        });
    }

    if cases.is_empty() {
        return Err(Error::EmptyCorpus(root.to_path_buf()));
    }
    let root_str = root.to_string_lossy().replace('\\', "/");
    let manifest = GroundTruthManifest::new(root_str, "juliet", "unspecified", taxonomy.clone(), cases)
        .with_root_dir(root);
    Ok(ScanOutcome { manifest, warnings })
}
