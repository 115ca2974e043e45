use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn sastgate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sastgate")).args(args).output().unwrap()
}

fn corpus40(args: &[&str], tools: &[&str]) -> Output {
    let f = fixtures();
    let manifest = f.join("corpus40/manifest.json");
    let reports: Vec<String> = tools
        .iter()
        .map(|t| f.join(format!("corpus40/reports/{t}.jsonl")).display().to_string())
        .collect();
    let mut all: Vec<&str> = args.to_vec();
    all.extend(["-m", manifest.to_str().unwrap()]);
    all.extend(reports.iter().map(String::as_str));
    sastgate(&all)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn score_three_reports() {
    let o = corpus40(&["score"], &["alpha", "bravo", "charlie"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().next().unwrap().starts_with("tool"));

    let o = corpus40(&["score", "--json"], &["alpha", "bravo", "charlie"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let alpha = rows.iter().find(|r| r["tool"] == "alpha").unwrap();
    // frozen by fixtures/oracle.py
    assert_eq!(
        (&alpha["counts"]["tp"], &alpha["counts"]["fp"], &alpha["counts"]["fn"], &alpha["detections"]),
        (&Value::from(35), &Value::from(48), &Value::from(15), &Value::from(83))
    );
}

#[test]
fn score_csv_header_is_exact() {
    let o = corpus40(&["score", "--format", "csv"], &["alpha", "bravo"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().next(), Some("tool,detections,tp,fp,fn,recall,precision,f1"));
}

#[test]
fn score_per_class_lists_taxonomy_classes() {
    let o = corpus40(&["score", "--per-class", "--json"], &["alpha"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["perClass"]["alpha"].as_array().unwrap().len(), 12);
}

#[test]
fn score_missing_manifest_names_the_path() {
    let o = sastgate(&["score", "-m", "/no/such/manifest.json", "x.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/no/such/manifest.json"));
    assert!(o.stdout.is_empty());
}

#[test]
fn score_unreadable_report_is_a_domain_error() {
    let o = corpus40(&["score", "/no/such/report.jsonl"], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/no/such/report.jsonl"));
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(sastgate(&["score"]).status.code(), Some(2));
    assert_eq!(sastgate(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(corpus40(&["score", "--sort", "speed"], &["alpha"]).status.code(), Some(2));
    assert_eq!(corpus40(&["score", "--line-window", "99"], &["alpha"]).status.code(), Some(2));
}

#[test]
fn combine_three_reports_ranks_seven_subsets() {
    let o = corpus40(&["combine", "--json", "--metric", "f1"], &["alpha", "bravo", "charlie"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 7);
    assert_eq!(rows[0]["members"], serde_json::json!(["alpha", "bravo"]));
}

#[test]
fn combine_text_marks_the_best_row_and_honours_top() {
    let o = corpus40(&["combine", "--top", "2", "--metric", "precision"], &["alpha", "bravo", "charlie", "delta"]);
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().contains("best precision"));
    assert!(text.lines().nth(1).unwrap().starts_with("bravo "));
}

#[test]
fn combine_single_report() {
    let o = corpus40(&["combine", "--json"], &["delta"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 1);
}

#[test]
fn combine_greedy_reports_path_and_optimality() {
    let o = corpus40(&["combine", "--json", "--strategy", "greedy", "--metric", "recall"], &["alpha", "bravo", "charlie", "delta"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["heuristic"], true);
    assert!(v["optimal"].is_boolean());
    assert_eq!(v["rows"][0]["members"].as_array().unwrap().len(), 4);
}

#[test]
fn combine_best_per_metric_needs_exhaustive() {
    let o = corpus40(&["combine", "--strategy", "greedy", "--best-per-metric"], &["alpha", "bravo"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn normalize_matches_golden() {
    let f = fixtures();
    for name in ["basic", "sonar", "tags", "unmapped", "missing-location"] {
        let input = f.join(format!("sarif/{name}.sarif"));
        let o = sastgate(&["normalize", input.to_str().unwrap(), "--corpus-root", "/work/app"]);
        assert_eq!(o.status.code(), Some(0));
        let golden = std::fs::read_to_string(f.join(format!("sarif/{name}.jsonl"))).unwrap();
        assert_eq!(stdout(&o), golden, "{name}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("findings"));
    }
}

#[test]
fn normalize_empty_results_gives_empty_body() {
    let input = fixtures().join("sarif/empty.sarif");
    let o = sastgate(&["normalize", input.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    assert!(String::from_utf8_lossy(&o.stderr).contains("0 findings"));
}

#[test]
fn normalize_errors() {
    let input = fixtures().join("sarif/basic.sarif");
    assert_eq!(sastgate(&["normalize", input.to_str().unwrap(), "--format", "bogus"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.sarif");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(sastgate(&["normalize", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(sastgate(&["normalize", "/no/such.sarif"]).status.code(), Some(1));
}

#[test]
fn normalize_with_named_rule_map_and_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.jsonl");
    let input = fixtures().join("sarif/sonar.sarif");
    let o = sastgate(&[
        "normalize",
        input.to_str().unwrap(),
        "--rule-map",
        "sonarqube",
        "--corpus-root",
        "/work/app",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let golden = std::fs::read_to_string(fixtures().join("sarif/sonar.jsonl")).unwrap();
    assert_eq!(std::fs::read_to_string(out).unwrap(), golden);
}

#[test]
fn scan_corpus_is_deterministic_and_matches_expected() {
    let dir = tempfile::tempdir().unwrap();
    let root = fixtures().join("juliet-mini");
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = sastgate(&["scan-corpus", root.to_str().unwrap(), "-o", out.to_str().unwrap(), "--corpus-root", "juliet-mini"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).starts_with("cases 6,"));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let manifest: Value = serde_json::from_slice(&bytes).unwrap();
    let expected: Value = serde_json::from_slice(&std::fs::read(fixtures().join("juliet-mini.expected.json")).unwrap()).unwrap();
    assert_eq!(manifest["cases"], expected["cases"]);
    assert_eq!(manifest["corpusRoot"], "juliet-mini");
}

#[test]
fn scan_corpus_records_a_relative_root_beneath_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let tree = dir.path().join("tree/testcases/CWE476_NULL_Pointer_Dereference");
    std::fs::create_dir_all(&tree).unwrap();
    let src = fixtures().join("juliet-mini/testcases/CWE476_NULL_Pointer_Dereference/CWE476_NULL_Pointer_Dereference__int_51a.c");
    std::fs::copy(src, tree.join("CWE476_NULL_Pointer_Dereference__int_51a.c")).unwrap();
    let out = dir.path().join("manifest.json");
    let root = dir.path().join("tree");
    let o = sastgate(&["scan-corpus", root.to_str().unwrap(), "-o", out.to_str().unwrap(), "--languages", "c"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(manifest["corpusRoot"], "tree");
}

#[test]
fn scan_corpus_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(sastgate(&["scan-corpus", empty.to_str().unwrap(), "-o", out.to_str().unwrap()]).status.code(), Some(1));
    assert!(!out.exists());
    let root = fixtures().join("juliet-mini");
    let o = sastgate(&["scan-corpus", root.to_str().unwrap(), "-o", out.to_str().unwrap(), "--languages", "cobol"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn serve_rejects_invalid_config_before_binding() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("gate.json");
    std::fs::write(&config, r#"{"storageRoot": "store", "analyzers": []}"#).unwrap();
    let o = sastgate(&["serve", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no analyzers"));
    let o = sastgate(&["serve", "--config", "/no/such/config.json"]);
    assert_eq!(o.status.code(), Some(1));
}
