use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sastgate_core::adapters::{parse_report, parse_report_auto, NormalizedReport, OutputFormat, RuleMap};
use sastgate_core::corpus::{load_manifest, scan_juliet_layout, GroundTruthManifest, Language};
use sastgate_core::ensemble::{
    best_per_metric, best_per_metric_text, evaluate_all_subsets, search_exhaustive, search_greedy_reduction,
    Objective, SearchInput, MAX_EXHAUSTIVE_TOOLS,
};
use sastgate_core::finding::DedupPolicy;
use sastgate_core::gate::{Gate, GateConfig};
use sastgate_core::matcher::{match_report, MatchConfig, MatchResult};
use sastgate_core::metrics::{fmt2, score_by_class, scorecard_table};
use sastgate_core::taxonomy::Taxonomy;

use crate::{CombineArgs, MatchArgs, NormalizeArgs, ScanCorpusArgs, ScoreArgs, ServeArgs, Strategy, TableFormat, UsageError};

/// A bundled name or a file path.
fn load_taxonomy(spec: Option<&str>) -> Result<Taxonomy> {
    match spec {
        None => Ok(Taxonomy::default()),
        Some(s) if Taxonomy::builtin_names().any(|n| n == s) => Ok(Taxonomy::builtin(s)?),
        Some(s) => Ok(Taxonomy::load(Path::new(s))?),
    }
}

fn load_rule_map(spec: &str) -> Result<RuleMap> {
    if RuleMap::builtin_names().any(|n| n == spec) {
        Ok(RuleMap::builtin(spec)?)
    } else {
        Ok(RuleMap::load(Path::new(spec))?)
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(out.flush()?)
        }
    }
}

/// `root` relative to `dir` with forward slashes, when `root` lies beneath it.
fn relative_root(root: &Path, dir: &Path) -> Option<String> {
    let root = root.canonicalize().ok()?;
    let dir = dir.canonicalize().ok()?;
    let rel = root.strip_prefix(&dir).ok()?;
    let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
    Some(if parts.is_empty() { ".".into() } else { parts.join("/") })
}

pub fn cmd_scan_corpus(args: &ScanCorpusArgs) -> Result<()> {
    let languages = args
        .languages
        .iter()
        .map(|l| l.parse::<Language>().map_err(|e| UsageError(e).into()))
        .collect::<Result<BTreeSet<_>>>()?;
    let taxonomy = load_taxonomy(args.taxonomy.as_deref())?;
    let outcome = scan_juliet_layout(&args.root, &languages, &taxonomy)?;
    for w in &outcome.warnings {
        eprintln!("warning: {}: {}", w.path, w.message);
    }
    let mut manifest = outcome.manifest;
    let out_dir = match args.output.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    manifest.corpus_root = match &args.corpus_root {
        Some(r) => r.clone(),
        None => relative_root(&args.root, &out_dir).unwrap_or_else(|| manifest.corpus_root.clone()),
    };
    manifest.write(&args.output)?;
    println!(
        "cases {}, flaw sites {}, good regions {}",
        manifest.cases.len(),
        manifest.flaw_site_count(),
        manifest.good_region_count()
    );
    Ok(())
}

pub fn cmd_normalize(args: &NormalizeArgs) -> Result<()> {
    let document = std::fs::read(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let mut report = match &args.rule_map {
        Some(spec) => parse_report(&args.format, &document, &load_rule_map(spec)?, &args.corpus_root)?,
        None => parse_report_auto(&args.format, &document, &args.corpus_root)?,
    };
    report.classify(&load_taxonomy(args.taxonomy.as_deref())?);
    write_output(args.output.as_deref(), &report.to_jsonl())?;
    let d = &report.diagnostics;
    eprintln!(
        "{}: {} findings, {} unmapped, {} without location, {} outside the target",
        report.tool,
        report.findings.len(),
        report.unmapped_count,
        d.missing_location,
        d.outside_target
    );
    Ok(())
}

/// Loads one report for matching against `manifest`. JSONL is taken as
/// already normalized; `.sarif` and `.xml` files are normalized here.
fn load_report(path: &Path, manifest: &GroundTruthManifest) -> Result<NormalizedReport> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let mut report = match ext.as_str() {
        "sarif" => {
            let doc = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            parse_report_auto(&OutputFormat::Sarif, &doc, manifest.root_dir())
                .with_context(|| format!("parsing {}", path.display()))?
        }
        _ => NormalizedReport::load_jsonl(path, &manifest.corpus_root)
            .with_context(|| format!("parsing {}", path.display()))?,
    };
    report.target = manifest.corpus_root.clone();
    Ok(report)
}

fn load_inputs(args: &MatchArgs) -> Result<(GroundTruthManifest, Vec<NormalizedReport>, MatchConfig)> {
    let config = MatchConfig::new(args.line_window, !args.lenient).map_err(|e| UsageError(e.to_string()))?;
    let manifest = load_manifest(&args.manifest).with_context(|| format!("loading {}", args.manifest.display()))?;
    let reports = args
        .reports
        .iter()
        .map(|p| load_report(p, &manifest))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, reports, config))
}

/// F1 per class, one column per tool.
fn per_class_text(results: &[MatchResult]) -> String {
    let tables: Vec<_> = results.iter().map(score_by_class).collect();
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["class".to_string()];
    header.extend(results.iter().map(|r| r.tool.clone()));
    if let Some(first) = tables.first() {
        for (i, (class, _)) in first.iter().enumerate() {
            let mut row = vec![class.clone()];
            row.extend(tables.iter().map(|t| fmt2(t[i].1.f1)));
            rows.push(row);
        }
    }
    let mut width: Vec<usize> = header.iter().map(String::len).collect();
    for row in &rows {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for row in std::iter::once(&header).chain(&rows) {
        let cells: Vec<String> = row
            .iter()
            .zip(&width)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

pub fn cmd_score(args: &ScoreArgs) -> Result<()> {
    let (manifest, reports, config) = load_inputs(&args.matching)?;
    let results = reports
        .iter()
        .map(|r| match_report(r, &manifest, &config))
        .collect::<sastgate_core::Result<Vec<_>>>()?;
    let table = scorecard_table(&results, args.sort)?;
    let format = if args.json { TableFormat::Json } else { args.format };
    let text = match format {
        TableFormat::Text => {
            let mut t = table.to_text();
            if args.per_class {
                t.push('\n');
                t.push_str(&per_class_text(&results));
            }
            t
        }
        TableFormat::Csv => table.to_csv(),
        TableFormat::Json => {
            let mut value = serde_json::to_value(&table)?;
            if args.per_class {
                let per_class: serde_json::Map<String, serde_json::Value> = results
                    .iter()
                    .map(|r| Ok((r.tool.clone(), serde_json::to_value(score_by_class(r))?)))
                    .collect::<Result<_>>()?;
                value["perClass"] = per_class.into();
            }
            let mut s = serde_json::to_string_pretty(&value)?;
            s.push('\n');
            s
        }
    };
    write_output(args.output.as_deref(), &text)
}

pub fn cmd_combine(args: &CombineArgs) -> Result<()> {
    let (manifest, reports, config) = load_inputs(&args.matching)?;
    let input = SearchInput::new(reports, &manifest, config, DedupPolicy::default())?;
    let objective = Objective::maximize(args.metric);
    let (ranking, all_rows) = match args.strategy {
        Strategy::Exhaustive => {
            let rows = evaluate_all_subsets(&input)?;
            (search_exhaustive(&input, objective)?, Some(rows))
        }
        Strategy::Greedy => {
            let mut g = search_greedy_reduction(&input, objective)?;
            if input.tools().len() <= MAX_EXHAUSTIVE_TOOLS {
                let e = search_exhaustive(&input, objective)?;
                g.compare_with(&e);
            }
            (g, None)
        }
    };
    if args.json {
        let mut value = serde_json::to_value(&ranking)?;
        if let (true, Some(rows)) = (args.best_per_metric, &all_rows) {
            let best: Vec<_> = best_per_metric(rows)
                .into_iter()
                .map(|(o, s)| serde_json::json!({ "type": o.best_label(), "subset": s }))
                .collect();
            value["bestPerMetric"] = best.into();
        }
        let mut s = serde_json::to_string_pretty(&value)?;
        s.push('\n');
        return write_output(None, &s);
    }
    let mut text = ranking.to_text(Some(args.top));
    if args.best_per_metric {
        match &all_rows {
            Some(rows) => {
                text.push('\n');
                text.push_str(&best_per_metric_text(&best_per_metric(rows)));
            }
            None => bail!(UsageError("--best-per-metric needs the exhaustive strategy".into())),
        }
    }
    write_output(None, &text)
}

pub fn cmd_serve(args: &ServeArgs) -> Result<()> {
    let mut config = GateConfig::load(&args.config)?;
    if let Some(port) = args.port {
        config.port = port;
    }
    if let Some(root) = &args.storage_root {
        config.storage_root = root.clone();
    }
    let gate = Gate::open(config).context("opening the gate")?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(crate::server::serve(gate, &args.host))
}
