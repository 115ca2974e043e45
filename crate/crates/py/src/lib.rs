//! Python bindings: reports, manifests, scoring, combination search and the
//! gate. Structured results come back as plain dicts and lists.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use sastgate_core::adapters::{parse_report, parse_report_auto, NormalizedReport, OutputFormat, RuleMap};
use sastgate_core::corpus::{load_manifest, scan_juliet_layout, GroundTruthManifest, Language};
use sastgate_core::ensemble::{merge, search_exhaustive, search_greedy_reduction, Objective, SearchInput, MAX_EXHAUSTIVE_TOOLS};
use sastgate_core::finding::DedupPolicy;
use sastgate_core::gate::{Decision, GateConfig, Verdict};
use sastgate_core::matcher::{match_report, Counts, MatchConfig};
use sastgate_core::metrics::{score, Metric};
use sastgate_core::taxonomy::Taxonomy;

create_exception!(sastgate, SastgateError, PyException);

fn err(e: sastgate_core::Error) -> PyErr {
    SastgateError::new_err(e.to_string())
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A normalized analyzer report.
#[pyclass(module = "sastgate", name = "Report")]
struct PyReport {
    inner: NormalizedReport,
}

#[pymethods]
impl PyReport {
    /// Parses a SARIF (or native) document. Paths become relative to
    /// `target_root`; the bundled rule map for the tool is used unless
    /// `rule_map` names another bundled map or a rule map file.
    #[staticmethod]
    #[pyo3(signature = (document, target_root, format = "sarif", rule_map = None))]
    fn parse(document: &[u8], target_root: &str, format: &str, rule_map: Option<&str>) -> PyResult<Self> {
        let format: OutputFormat = format.parse().map_err(err)?;
        let root = Path::new(target_root);
        let mut inner = match rule_map {
            None => parse_report_auto(&format, document, root),
            Some(name) if RuleMap::builtin_names().any(|n| n == name) => {
                parse_report(&format, document, &RuleMap::builtin(name).map_err(err)?, root)
            }
            Some(path) => parse_report(&format, document, &RuleMap::load(Path::new(path)).map_err(err)?, root),
        }
        .map_err(err)?;
        inner.classify(&Taxonomy::default());
        Ok(PyReport { inner })
    }

    /// Reads normalized JSONL produced for `target`.
    #[staticmethod]
    fn load_jsonl(path: PathBuf, target: &str) -> PyResult<Self> {
        let inner = NormalizedReport::load_jsonl(&path, target).map_err(err)?;
        Ok(PyReport { inner })
    }

    #[getter]
    fn tool(&self) -> String {
        self.inner.tool.name.clone()
    }

    #[getter]
    fn target(&self) -> String {
        self.inner.target.clone()
    }

    #[getter]
    fn unmapped_count(&self) -> usize {
        self.inner.unmapped_count
    }

    fn findings<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.findings)
    }

    fn to_jsonl(&self) -> String {
        self.inner.to_jsonl()
    }

    fn __len__(&self) -> usize {
        self.inner.findings.len()
    }

    fn __repr__(&self) -> String {
        format!("Report(tool={:?}, findings={})", self.inner.tool.name, self.inner.findings.len())
    }
}

/// A ground-truth manifest.
#[pyclass(module = "sastgate", name = "Manifest")]
struct PyManifest {
    inner: GroundTruthManifest,
}

#[pymethods]
impl PyManifest {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyManifest {
            inner: load_manifest(&path).map_err(err)?,
        })
    }

    /// Builds a manifest from a Juliet-style tree.
    #[staticmethod]
    #[pyo3(signature = (root, languages = None))]
    fn scan(root: PathBuf, languages: Option<Vec<String>>) -> PyResult<Self> {
        let languages = languages
            .unwrap_or_default()
            .iter()
            .map(|l| l.parse::<Language>().map_err(PyValueError::new_err))
            .collect::<PyResult<BTreeSet<_>>>()?;
        let outcome = scan_juliet_layout(&root, &languages, &Taxonomy::default()).map_err(err)?;
        Ok(PyManifest { inner: outcome.manifest })
    }

    #[getter]
    fn corpus_root(&self) -> String {
        self.inner.corpus_root.clone()
    }

    #[getter]
    fn case_count(&self) -> usize {
        self.inner.cases.len()
    }

    #[getter]
    fn flaw_site_count(&self) -> usize {
        self.inner.flaw_site_count()
    }

    #[getter]
    fn good_region_count(&self) -> usize {
        self.inner.good_region_count()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    /// Strict matching of one report; returns totals, per-class counts and
    /// scores.
    #[pyo3(signature = (report, line_window = 0, class_strict = true))]
    fn evaluate<'py>(&self, py: Python<'py>, report: &PyReport, line_window: u32, class_strict: bool) -> PyResult<Bound<'py, PyAny>> {
        let config = MatchConfig::new(line_window, class_strict).map_err(err)?;
        let mut r = report.inner.clone();
        r.target = self.inner.corpus_root.clone();
        let result = match_report(&r, &self.inner, &config).map_err(err)?;
        let out = serde_json::json!({
            "tool": result.tool,
            "totals": result.totals,
            "detections": result.detections,
            "perClass": result.per_class,
            "score": score(result.totals),
        });
        to_py(py, &out)
    }

    /// Ranks tool subsets. `strategy` is "exhaustive" or "greedy"; a greedy
    /// run over at most 16 tools is checked against the exhaustive optimum.
    #[pyo3(signature = (reports, metric = "f1", strategy = "exhaustive", line_window = 0))]
    fn combine<'py>(
        &self,
        py: Python<'py>,
        reports: Vec<PyRef<'py, PyReport>>,
        metric: &str,
        strategy: &str,
        line_window: u32,
    ) -> PyResult<Bound<'py, PyAny>> {
        let metric: Metric = metric.parse().map_err(err)?;
        let config = MatchConfig::new(line_window, true).map_err(err)?;
        let owned: Vec<NormalizedReport> = reports
            .iter()
            .map(|r| {
                let mut n = r.inner.clone();
                n.target = self.inner.corpus_root.clone();
                n
            })
            .collect();
        let input = SearchInput::new(owned, &self.inner, config, DedupPolicy::default()).map_err(err)?;
        let objective = Objective::maximize(metric);
        let ranking = match strategy {
            "exhaustive" => search_exhaustive(&input, objective).map_err(err)?,
            "greedy" => {
                let mut g = search_greedy_reduction(&input, objective).map_err(err)?;
                if input.tools().len() <= MAX_EXHAUSTIVE_TOOLS {
                    g.compare_with(&search_exhaustive(&input, objective).map_err(err)?);
                }
                g
            }
            other => return Err(PyValueError::new_err(format!("unknown strategy {other:?}"))),
        };
        to_py(py, &ranking)
    }

    fn __repr__(&self) -> String {
        format!("Manifest(root={:?}, cases={})", self.inner.corpus_root, self.inner.cases.len())
    }
}

/// Recall, precision and F1 from raw counts.
#[pyfunction]
#[pyo3(name = "score", signature = (tp, fp, r#fn))]
fn py_score<'py>(py: Python<'py>, tp: u64, fp: u64, r#fn: u64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &score(Counts::new(tp, fp, 0, r#fn)))
}

/// Union of reports under the default dedup policy, with per-key agreement.
#[pyfunction]
fn merge_reports<'py>(py: Python<'py>, reports: Vec<PyRef<'py, PyReport>>) -> PyResult<Bound<'py, PyAny>> {
    let refs: Vec<&NormalizedReport> = reports.iter().map(|r| &r.inner).collect();
    let ensemble = merge(&refs, &DedupPolicy::default()).map_err(err)?;
    let agreement: Vec<_> = ensemble
        .merged_report
        .findings
        .iter()
        .zip(&ensemble.attribution)
        .map(|(f, tools)| serde_json::json!({ "finding": f, "tools": tools }))
        .collect();
    to_py(py, &serde_json::json!({ "members": ensemble.members, "findings": agreement }))
}

/// The submission gate over a storage directory.
#[pyclass(module = "sastgate", name = "Gate")]
struct PyGate {
    inner: sastgate_core::gate::Gate,
}

#[pymethods]
impl PyGate {
    #[new]
    fn new(config_path: PathBuf) -> PyResult<Self> {
        let config = GateConfig::load(&config_path).map_err(err)?;
        Ok(PyGate {
            inner: sastgate_core::gate::Gate::open(config).map_err(err)?,
        })
    }

    fn submit<'py>(&self, py: Python<'py>, archive: &[u8], submitter: &str) -> PyResult<Bound<'py, PyAny>> {
        let s = self.inner.submit(archive, submitter).map_err(err)?;
        to_py(py, &s)
    }

    /// Runs the analyzers; the GIL is released meanwhile.
    fn assess<'py>(&self, py: Python<'py>, id: &str) -> PyResult<Bound<'py, PyAny>> {
        let outcome = py.detach(|| self.inner.assess(id)).map_err(err)?;
        to_py(py, &outcome)
    }

    /// `verdict` is "pass" or "fail".
    fn decide<'py>(&self, py: Python<'py>, id: &str, moderator: &str, verdict: &str, rationale: &str) -> PyResult<Bound<'py, PyAny>> {
        let verdict = match verdict {
            "pass" => Verdict::Pass,
            "fail" => Verdict::Fail,
            other => return Err(PyValueError::new_err(format!("unknown verdict {other:?}"))),
        };
        let s = self.inner.decide(id, Decision::new(moderator, verdict, rationale)).map_err(err)?;
        to_py(py, &s)
    }

    fn get<'py>(&self, py: Python<'py>, id: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.get(id).map_err(err)?)
    }

    fn report<'py>(&self, py: Python<'py>, id: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.get_report(id).map_err(err)?)
    }
}

#[pymodule]
fn sastgate(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SastgateError", m.py().get_type::<SastgateError>())?;
    m.add_class::<PyReport>()?;
    m.add_class::<PyManifest>()?;
    m.add_class::<PyGate>()?;
    m.add_function(wrap_pyfunction!(py_score, m)?)?;
    m.add_function(wrap_pyfunction!(merge_reports, m)?)?;
    Ok(())
}
