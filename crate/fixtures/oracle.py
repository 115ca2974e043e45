#!/usr/bin/env python3
"""Brute-force reference evaluator for the corpus40/mini10 fixtures.

Tests every finding against every flaw site and good region, with no indexing,
and prints per-tool and per-subset counts used as frozen expectations.
"""
import itertools
import json
import os
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
CLASS_OF = {}
for label, cwes in {
    "Injection": [89, 78, 564],
    "Number Handling": [369, 190, 191],
    "Pointer and Reference Handling": [476, 690],
    "Error Handling": [390, 396, 755],
    "Code Quality": [561, 563, 398],
    "Encryption and Randomness": [330],
}.items():
    for c in cwes:
        CLASS_OF[c] = label


def load(corpus, tools):
    m = json.load(open(os.path.join(HERE, corpus, "manifest.json")))
    reps = {}
    for t in tools:
        with open(os.path.join(HERE, corpus, "reports", t + ".jsonl")) as f:
            reps[t] = [json.loads(l) for l in f if l.strip()]
    return m, reps


def evaluate(manifest, findings):
    hit_sites, hit_goods, detections = set(), set(), set()
    for fd in findings:
        cls = CLASS_OF.get(fd.get("cwe"))
        label = None
        for case in manifest["cases"]:
            if fd["file"] not in case["files"] or cls != case["targetClass"]:
                continue
            for i, fl in enumerate(case["flaws"]):
                if fl["file"] == fd["file"] and fl["line"] <= fd["line"] <= fl["endLine"]:
                    hit_sites.add((case["caseId"], i))
                    label = "TP"
            if label is None:
                for i, g in enumerate(case["goods"]):
                    if g["file"] == fd["file"] and g["line"] <= fd["line"] <= g["endLine"]:
                        hit_goods.add((case["caseId"], i))
                        label = "FP"
        if label:
            detections.add((cls, fd["file"], fd["line"]))
    n_sites = sum(len(c["flaws"]) for c in manifest["cases"])
    n_goods = sum(len(c["goods"]) for c in manifest["cases"])
    tp, fp = len(hit_sites), len(hit_goods)
    return {"tp": tp, "fp": fp, "fn": n_sites - tp, "tn": n_goods - fp, "detections": len(detections)}


def metrics(c):
    r = c["tp"] / (c["tp"] + c["fn"]) if c["tp"] + c["fn"] else 0.0
    p = c["tp"] / (c["tp"] + c["fp"]) if c["tp"] + c["fp"] else 0.0
    f = 2 * r * p / (r + p) if r + p else 0.0
    return {"recall": r, "precision": p, "f1": f, "detections": c["detections"]}


def main():
    args = sys.argv[1:]
    as_json = "--json" in args
    args = [a for a in args if a != "--json"]
    corpus = args[0] if args else "corpus40"
    tools = args[1:] or ["alpha", "bravo", "charlie", "delta"]
    m, reps = load(corpus, tools)
    rows = []
    for k in range(1, len(tools) + 1):
        for subset in itertools.combinations(sorted(tools), k):
            c = evaluate(m, [f for t in subset for f in reps[t]])
            rows.append((subset, c, metrics(c)))
    best = {
        obj: "+".join(sorted(rows, key=lambda r: (-r[2][obj], len(r[0]), r[0]))[0][0])
        for obj in ["f1", "precision", "recall", "detections"]
    }
    if as_json:
        out = {"subsets": {"+".join(s): c for s, c, _ in rows}, "best": best}
        print(json.dumps(out, indent=2, sort_keys=True))
        return
    print("sites", sum(len(c["flaws"]) for c in m["cases"]), "goods", sum(len(c["goods"]) for c in m["cases"]))
    for subset, c, mt in rows:
        print("+".join(subset), c, {k2: round(v, 4) for k2, v in mt.items()})
    for obj, name in best.items():
        print("best", obj, name)


if __name__ == "__main__":
    main()
