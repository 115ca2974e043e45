"""Smoke test for the sastgate extension module.

Build and install first:
    maturin develop -m crates/py/Cargo.toml
then run from the repository root:
    python crates/py/python/smoke_test.py
"""
import json
import os
import shutil
import sys
import tempfile

import sastgate

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", "..", ".."))
FIX = os.path.join(ROOT, "fixtures")


def check(cond, what):
    if not cond:
        print("FAIL", what)
        sys.exit(1)
    print("ok  ", what)


def main():
    card = sastgate.score(9381, 6216, 17321)
    check(round(card["recall"], 2) == 0.35 and round(card["f1"], 2) == 0.44, "score from raw counts")
    check(sastgate.score(0, 0, 5)["degenerate"] == ["no-positives-reported"], "degenerate flag")

    with open(os.path.join(FIX, "sarif", "basic.sarif"), "rb") as f:
        report = sastgate.Report.parse(f.read(), "/work/app")
    with open(os.path.join(FIX, "sarif", "basic.jsonl")) as f:
        check(report.to_jsonl() == f.read(), "SARIF normalizes to the golden JSONL")
    check(len(report) == 3 and report.findings()[0]["class"] == "Injection", "report accessors")

    try:
        sastgate.Report.parse(b"{}", "/work/app")
        check(False, "malformed SARIF raises")
    except sastgate.SastgateError:
        check(True, "malformed SARIF raises")

    manifest = sastgate.Manifest.load(os.path.join(FIX, "corpus40", "manifest.json"))
    check(manifest.case_count == 40, "manifest loads")
    reports = [
        sastgate.Report.load_jsonl(os.path.join(FIX, "corpus40", "reports", t + ".jsonl"), manifest.corpus_root)
        for t in ["alpha", "bravo", "charlie", "delta"]
    ]
    alpha = manifest.evaluate(reports[0])
    check((alpha["totals"]["tp"], alpha["totals"]["fp"], alpha["detections"]) == (35, 48, 83), "strict matching")
    ranking = manifest.combine(reports, metric="f1")
    check(len(ranking["rows"]) == 15 and ranking["rows"][0]["members"] == ["alpha", "bravo"], "exhaustive combination")
    greedy = manifest.combine(reports, metric="recall", strategy="greedy")
    check(greedy["heuristic"] and "optimal" in greedy, "greedy combination")

    scanned = sastgate.Manifest.scan(os.path.join(FIX, "juliet-mini"))
    check(scanned.case_count == 6, "corpus scan")

    if os.name == "posix":
        tmp = tempfile.mkdtemp()
        try:
            spec = lambda tool: {
                "tool": {"name": tool, "version": "1"},
                "command": ["cp", os.path.join(FIX, "gate", tool + ".sarif"), "{output}"],
                "outputFormat": "sarif",
                "timeout": 30,
            }
            cfg = os.path.join(tmp, "gate.json")
            with open(cfg, "w") as f:
                json.dump({"storageRoot": "store", "analyzers": [spec("mock-a"), spec("mock-b")]}, f)
            gate = sastgate.Gate(cfg)
            with open(os.path.join(FIX, "gate", "app.zip"), "rb") as f:
                sub = gate.submit(f.read(), "alice")
            outcome = gate.assess(sub["id"])
            check(outcome["report"]["totalFindings"] == 4, "gate assessment")
            check(gate.decide(sub["id"], "mod", "pass", "fine")["state"] == "Published", "gate decision")
        finally:
            shutil.rmtree(tmp)
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
