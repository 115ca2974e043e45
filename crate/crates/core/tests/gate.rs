#![cfg(unix)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Barrier};

use sastgate_core::adapters::{AnalyzerSpec, OutputFormat};
use sastgate_core::finding::ToolId;
use sastgate_core::gate::{Decision, Gate, GateConfig, SubmissionState, TriageLabel, Verdict};
use sastgate_core::Error;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/gate")
}

fn archive() -> Vec<u8> {
    std::fs::read(fixtures().join("app.zip")).unwrap()
}

/// An analyzer that copies a canned SARIF file to its output, after
/// recording the invocation in `<storage>/calls-<tool>`.
fn sh_analyzer(tool: &str, script: &str, timeout: f64) -> AnalyzerSpec {
    AnalyzerSpec {
        tool: ToolId::new(tool, "1.0"),
        command: vec!["sh".into(), "-c".into(), script.into(), "sh".into(), "{target}".into(), "{output}".into()],
        output_format: OutputFormat::Sarif,
        timeout,
        rule_map: None,
    }
}

fn copying(tool: &str, counter: &Path) -> AnalyzerSpec {
    let sarif = fixtures().join(format!("{tool}.sarif"));
    let script = format!(
        "echo x >> '{}'; cp '{}' \"$2\"",
        counter.join(format!("calls-{tool}")).display(),
        sarif.display()
    );
    sh_analyzer(tool, &script, 30.0)
}

fn gate_in(dir: &Path) -> Gate {
    Gate::open(GateConfig::new(dir.join("store"), vec![copying("mock-a", dir), copying("mock-b", dir)])).unwrap()
}

fn calls(dir: &Path, tool: &str) -> usize {
    std::fs::read_to_string(dir.join(format!("calls-{tool}")))
        .map(|s| s.lines().count())
        .unwrap_or(0)
}

fn pass() -> Decision {
    Decision::new("mod", Verdict::Pass, "reviewed, findings are false positives")
}

#[test]
fn submit_assess_decide() {
    let dir = tempfile::tempdir().unwrap();
    let gate = gate_in(dir.path());
    let s = gate.submit(&archive(), "alice").unwrap();
    assert_eq!(s.state, SubmissionState::Submitted);

    let out = gate.assess(&s.id).unwrap();
    assert_eq!(out.submission.state, SubmissionState::AwaitingReview);
    let report = out.report.unwrap();

    let expected: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fixtures().join("expected.json")).unwrap()).unwrap();
    assert_eq!(report.total_findings as u64, expected["totalFindings"].as_u64().unwrap());
    assert_eq!(serde_json::to_value(&report.per_tool_counts).unwrap(), expected["perToolCounts"]);
    assert_eq!(serde_json::to_value(&report.agreement).unwrap(), expected["agreement"]);
    let class_counts: BTreeMap<_, _> = report.class_summary.iter().map(|c| (c.class.clone(), c.count)).collect();
    assert_eq!(serde_json::to_value(&class_counts).unwrap(), expected["classCounts"]);
    assert_eq!(serde_json::to_value(report.highest_severity).unwrap(), expected["highestSeverity"]);
    assert_eq!(report.all_findings().count(), report.total_findings);
    assert!(report.agreement.values().all(|&a| (1..=2).contains(&a)));

    let published = gate.decide(&s.id, pass()).unwrap();
    assert_eq!(published.state, SubmissionState::Published);
    assert!(published.updated_at >= published.created_at);
    assert!(matches!(gate.assess(&s.id), Err(Error::InvalidTransition { .. })));
    assert!(matches!(gate.decide(&s.id, pass()), Err(Error::AlreadyDecided(_))));
}

#[test]
fn state_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let gate = gate_in(dir.path());
        let s = gate.submit(&archive(), "alice").unwrap();
        gate.assess(&s.id).unwrap();
        gate.decide(&s.id, Decision::new("mod", Verdict::Fail, "sent back")).unwrap();
        gate.flush().unwrap();
        s.id
    };
    let gate = gate_in(dir.path());
    assert_eq!(gate.get(&id).unwrap().state, SubmissionState::Rejected);
    assert_eq!(gate.decision(&id).unwrap().verdict, Verdict::Fail);
    assert!(gate.get_report(&id).is_ok());
}

#[test]
fn submit_rejections_and_content_addressing() {
    let dir = tempfile::tempdir().unwrap();
    let gate = gate_in(dir.path());
    assert!(matches!(gate.submit(b"", "a"), Err(Error::RejectedInput(_))));
    assert!(matches!(gate.submit(b"plain text", "a"), Err(Error::RejectedInput(_))));
    let a = gate.submit(&archive(), "a").unwrap();
    let b = gate.submit(&archive(), "b").unwrap();
    assert_ne!(a.id, b.id);
    assert_eq!(a.artifact_path, b.artifact_path);

    let mut config = GateConfig::new(dir.path().join("small"), vec![copying("mock-a", dir.path())]);
    config.max_archive_bytes = 100;
    let small = Gate::open(config).unwrap();
    assert!(matches!(small.submit(&archive(), "a"), Err(Error::TooLarge { .. })));
}

#[test]
fn reports_and_decisions_follow_the_state() {
    let dir = tempfile::tempdir().unwrap();
    let gate = gate_in(dir.path());
    assert!(matches!(gate.get_report("nope"), Err(Error::NotFound(_))));
    let s = gate.submit(&archive(), "alice").unwrap();
    assert!(matches!(gate.get_report(&s.id), Err(Error::NotReady(_))));
    gate.start_assess(&s.id).unwrap();
    assert!(matches!(gate.get_report(&s.id), Err(Error::NotReady(_))));
    assert!(matches!(gate.decide(&s.id, pass()), Err(Error::InvalidTransition { .. })));
    gate.finish_assess(&s.id).unwrap();

    let first = gate.get_report_bytes(&s.id).unwrap();
    assert_eq!(gate.get_report_bytes(&s.id).unwrap(), first);

    let empty = Decision::new("mod", Verdict::Pass, "  ");
    assert!(matches!(gate.decide(&s.id, empty), Err(Error::InvalidDecision(_))));
    let mut unknown = pass();
    unknown.triage.insert("class=Nope|file=x|line=1".into(), TriageLabel::Confirmed);
    assert!(matches!(gate.decide(&s.id, unknown), Err(Error::InvalidDecision(_))));

    let mut triaged = Decision::new("mod", Verdict::Fail, "injection confirmed");
    triaged
        .triage
        .insert("class=Injection|file=src/Login.java|line=12".into(), TriageLabel::Confirmed);
    assert_eq!(gate.decide(&s.id, triaged).unwrap().state, SubmissionState::Rejected);
    assert_eq!(gate.list(Some(SubmissionState::Rejected)).len(), 1);
    assert!(gate.list(Some(SubmissionState::AwaitingReview)).is_empty());
}

#[test]
fn all_analyzers_failing_marks_the_submission_failed() {
    let dir = tempfile::tempdir().unwrap();
    let config = GateConfig::new(
        dir.path().join("store"),
        vec![sh_analyzer("slow-a", "sleep 5", 0.3), sh_analyzer("slow-b", "sleep 5", 0.3)],
    );
    let gate = Gate::open(config).unwrap();
    let s = gate.submit(&archive(), "alice").unwrap();
    let started = std::time::Instant::now();
    let out = gate.assess(&s.id).unwrap();
    assert!(started.elapsed().as_secs() < 4);
    assert_eq!(out.submission.state, SubmissionState::Failed);
    assert!(out.report.is_none());
    assert_eq!(out.submission.failures.len(), 2);
    assert!(out.submission.failures.iter().all(|f| f.timed_out));
    assert!(matches!(gate.get_report(&s.id), Err(Error::NotReady(_))));
}

#[test]
fn one_failing_analyzer_still_yields_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = GateConfig::new(
        dir.path().join("store"),
        vec![copying("mock-a", dir.path()), sh_analyzer("broken", "exit 7", 10.0)],
    );
    let gate = Gate::open(config).unwrap();
    let s = gate.submit(&archive(), "alice").unwrap();
    let report = gate.assess(&s.id).unwrap().report.unwrap();
    assert_eq!(report.total_findings, 3);
    assert_eq!(report.failures.len(), 1);
    assert_eq!(report.failures[0].tool, "broken");
}

#[test]
fn concurrent_decisions_have_one_winner() {
    let dir = tempfile::tempdir().unwrap();
    let gate = Arc::new(gate_in(dir.path()));
    let s = gate.submit(&archive(), "alice").unwrap();
    gate.assess(&s.id).unwrap();
    let n = 8;
    let barrier = Arc::new(Barrier::new(n));
    let handles: Vec<_> = (0..n)
        .map(|i| {
            let (gate, barrier, id) = (Arc::clone(&gate), Arc::clone(&barrier), s.id.clone());
            std::thread::spawn(move || {
                let verdict = if i % 2 == 0 { Verdict::Pass } else { Verdict::Fail };
                barrier.wait();
                gate.decide(&id, Decision::new(format!("mod{i}"), verdict, "race"))
            })
        })
        .collect();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1);
    assert!(results
        .iter()
        .filter_map(|r| r.as_ref().err())
        .all(|e| matches!(e, Error::AlreadyDecided(_))));
    let winner = results.iter().find_map(|r| r.as_ref().ok()).unwrap();
    let decision = gate.decision(&s.id).unwrap();
    let expected = if decision.verdict == Verdict::Pass { SubmissionState::Published } else { SubmissionState::Rejected };
    assert_eq!(winner.state, expected);
}

/// Drops the last `n` records from the event log, as if the process died
/// before writing them.
fn forget_last_events(store: &Path, n: usize) {
    let log = store.join("events.jsonl");
    let text = std::fs::read_to_string(&log).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let kept = lines[..lines.len() - n].join("\n") + "\n";
    std::fs::write(&log, kept).unwrap();
}

#[test]
fn crash_during_scanning_is_resumable_and_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let (id, digest, bytes) = {
        let gate = gate_in(dir.path());
        let s = gate.submit(&archive(), "alice").unwrap();
        let report = gate.assess(&s.id).unwrap().report.unwrap();
        (s.id.clone(), report.digest, gate.get_report_bytes(&s.id).unwrap())
    };
    // the report reached disk but the AwaitingReview record did not
    forget_last_events(&store, 1);

    let gate = gate_in(dir.path());
    assert_eq!(gate.get(&id).unwrap().state, SubmissionState::Scanning);
    let retried = gate.assess(&id).unwrap();
    assert_eq!(retried.submission.state, SubmissionState::AwaitingReview);
    assert_eq!(retried.report.unwrap().digest, digest);
    assert_eq!(gate.get_report_bytes(&id).unwrap(), bytes);
    // analyzer outputs were reused, not recomputed
    assert_eq!((calls(dir.path(), "mock-a"), calls(dir.path(), "mock-b")), (1, 1));

    // a torn final record is ignored on open
    drop(gate);
    let log = store.join("events.jsonl");
    let mut text = std::fs::read_to_string(&log).unwrap();
    text.push_str("{\"seq\":99,\"at\":");
    std::fs::write(&log, text).unwrap();
    let gate = gate_in(dir.path());
    assert_eq!(gate.get(&id).unwrap().state, SubmissionState::AwaitingReview);
    gate.decide(&id, pass()).unwrap();
    drop(gate);
    assert_eq!(gate_in(dir.path()).get(&id).unwrap().state, SubmissionState::Published);
}

#[test]
fn no_operation_sequence_publishes_without_a_pass_decision() {
    #[derive(Clone, Copy, Debug)]
    enum Op {
        Assess,
        Pass,
        Fail,
    }
    let ops = [Op::Assess, Op::Pass, Op::Fail];
    let mut sequences: Vec<Vec<Op>> = vec![vec![]];
    for _ in 0..3 {
        let longer: Vec<Vec<Op>> = sequences
            .iter()
            .filter(|s| s.len() == sequences.last().unwrap().len())
            .flat_map(|s| ops.iter().map(move |&o| [s.clone(), vec![o]].concat()))
            .collect();
        sequences.extend(longer);
    }
    let dir = tempfile::tempdir().unwrap();
    let gate = gate_in(dir.path());
    for seq in &sequences {
        let s = gate.submit(&archive(), "enum").unwrap();
        for op in seq {
            let _ = match op {
                Op::Assess => gate.assess(&s.id).map(|o| o.submission),
                Op::Pass => gate.decide(&s.id, pass()),
                Op::Fail => gate.decide(&s.id, Decision::new("m", Verdict::Fail, "no")),
            };
        }
        let state = gate.get(&s.id).unwrap().state;
        if state == SubmissionState::Published {
            assert_eq!(gate.decision(&s.id).map(|d| d.verdict), Some(Verdict::Pass), "{seq:?}");
        }
        if let Some(d) = gate.decision(&s.id) {
            let expect = if d.verdict == Verdict::Pass { SubmissionState::Published } else { SubmissionState::Rejected };
            assert_eq!(state, expect, "{seq:?}");
        }
    }
    assert_eq!(sequences.len(), 1 + 3 + 9 + 27);
}
