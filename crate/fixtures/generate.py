#!/usr/bin/env python3
"""Regenerates the synthetic Juliet-style corpora and mock reports under fixtures/.

Everything here is built from explicit line bookkeeping, never by parsing the
generated sources, so the emitted manifests double as independent expectations
for the corpus scanner.
"""
import json
import os
import random
import shutil

HERE = os.path.dirname(os.path.abspath(__file__))


def java_case(pkg, cls, funcs):
    """funcs: list of (signature, body_line_count, kind) with kind in {bad, good, other}.

    Returns (text, spans) where spans = [(name, kind, start, end)] 1-based inclusive.
    """
    lines = [
        "/* Synthetic test case",
        " * Label Definition File: %s.label.xml" % cls,
        " */",
        "package testcases.%s;" % pkg,
        "",
        "import testcasesupport.*;",
        "",
        "public class %s extends AbstractTestCase" % cls,
        "{",
    ]
    spans = []
    for i, (sig, body, kind) in enumerate(funcs):
        start = len(lines) + 1
        lines.append("    %s" % sig)
        lines.append("    {")
        for b in range(body):
            lines.append("        int v%d = %d; /* { brace in comment */" % (b, b) if b % 5 == 4
                         else "        IO.writeLine(\"step %d {\");" % b)
        lines.append("    }")
        end = len(lines)
        name = sig.split("(")[0].split()[-1]
        spans.append((name, kind, start, end))
        if i != len(funcs) - 1:
            lines.append("")
    lines.append("}")
    return "\n".join(lines) + "\n", spans


CLASSES = [
    ("Injection", [(89, "SQL_Injection"), (78, "OS_Command_Injection")], 564),
    ("Number Handling", [(369, "Divide_by_Zero"), (190, "Integer_Overflow")], 191),
    ("Pointer and Reference Handling", [(476, "NULL_Pointer_Dereference"), (690, "NULL_Deref_From_Return")], 476),
    ("Error Handling", [(390, "Error_Without_Action"), (396, "Catch_Generic_Exception")], 755),
    ("Code Quality", [(561, "Dead_Code"), (563, "Unused_Variable")], 398),
]
OUT_OF_CLASS_CWE = 330  # Encryption and Randomness


def build_corpus(dirname, n_cases, sink_every, seed):
    rng = random.Random(seed)
    root = os.path.join(HERE, dirname)
    if os.path.exists(root):
        shutil.rmtree(root)
    os.makedirs(root)
    cases = []
    for i in range(n_cases):
        label, cwes, alt = CLASSES[i % len(CLASSES)]
        cwe, cname = cwes[(i // len(CLASSES)) % 2]
        variant = "%02d" % (i + 1)
        pkg = "CWE%d_%s" % (cwe, cname)
        cls = "%s__synthetic_%s" % (pkg, variant)
        funcs = [("public void bad() throws Throwable", rng.randint(3, 9), "bad")]
        if sink_every and i % sink_every == 0:
            funcs.append(("private void badSink(String data) throws Throwable", rng.randint(2, 5), "bad"))
        funcs.append(("private void goodG2B() throws Throwable", rng.randint(3, 8), "good"))
        if i % 3 != 2:
            funcs.append(("private void goodB2G() throws Throwable", rng.randint(3, 8), "good"))
        funcs.append(("public void good() throws Throwable", 2, "good"))
        text, spans = java_case(pkg, cls, funcs)
        rel = "testcases/%s/%s.java" % (pkg, cls)
        path = os.path.join(root, rel)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "w", newline="\n") as f:
            f.write(text)
        cases.append({
            "caseId": cls,
            "language": "java",
            "targetClass": label,
            "files": [rel],
            "flaws": [{"file": rel, "line": s, "endLine": e, "cwe": cwe} for (_, k, s, e) in spans if k == "bad"],
            "goods": [{"file": rel, "line": s, "endLine": e, "description": n} for (n, k, s, e) in spans if k == "good"],
            "_alt": alt,
        })
    cases.sort(key=lambda c: c["caseId"])
    return root, cases


def write_manifest(root, cases, suite, corpus_root):
    manifest = {
        "suiteName": suite,
        "suiteVersion": "synthetic-1",
        "corpusRoot": corpus_root,
        "taxonomy": "weakness-12",
        "cases": [{k: v for k, v in c.items() if not k.startswith("_")} for c in cases],
    }
    with open(os.path.join(root, "manifest.json"), "w", newline="\n") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


def finding(tool, rule, cwe, file, line, msg, severity="medium"):
    d = {"tool": tool, "toolVersion": "1.0", "ruleId": rule}
    if cwe is not None:
        d["cwe"] = cwe
    d.update({"file": file, "line": line, "severity": severity, "message": msg})
    return d


def write_jsonl(path, findings):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", newline="\n") as f:
        for fd in findings:
            f.write(json.dumps(fd, separators=(",", ":")) + "\n")


def tool_report(tool, cases, flaw_ids, good_ids, extras, rng):
    """flaw_ids/good_ids index the flattened site/region lists."""
    sites = [(c, fl) for c in cases for fl in c["flaws"]]
    regions = [(c, g) for c in cases for g in c["goods"]]
    out = []
    for idx in sorted(flaw_ids):
        c, fl = sites[idx]
        cwe = fl["cwe"] if idx % 2 == 0 else c["_alt"]
        line = rng.randint(fl["line"], fl["endLine"])
        out.append(finding(tool, "R%d" % cwe, cwe, fl["file"], line, "flaw hit"))
    for idx in sorted(good_ids):
        c, g = regions[idx]
        cwe = c["flaws"][0]["cwe"]
        line = rng.randint(g["line"], g["endLine"])
        out.append(finding(tool, "R%d" % cwe, cwe, g["file"], line, "good hit", "low"))
    out.extend(extras)
    rng.shuffle(out)
    return out


def main():
    # 40-case corpus with four mock tools.
    root, cases = build_corpus("corpus40", 40, 4, seed=40)
    write_manifest(root, cases, "synthetic-juliet-40", ".")
    rng = random.Random(4040)
    n_sites = sum(len(c["flaws"]) for c in cases)
    n_goods = sum(len(c["goods"]) for c in cases)
    all_sites = list(range(n_sites))
    all_goods = list(range(n_goods))
    c0 = cases[0]
    c1 = cases[1]
    specs = {
        "alpha": (rng.sample(all_sites, int(n_sites * 0.7)), rng.sample(all_goods, int(n_goods * 0.45))),
        "bravo": (rng.sample(all_sites, int(n_sites * 0.35)), rng.sample(all_goods, int(n_goods * 0.08))),
        "charlie": (rng.sample(all_sites, int(n_sites * 0.5)), rng.sample(all_goods, int(n_goods * 0.25))),
        "delta": (rng.sample(all_sites, int(n_sites * 0.1)), rng.sample(all_goods, int(n_goods * 0.3))),
    }
    extras = {
        # out-of-class at a flaw line, plus an in-class finding on the package line
        "alpha": [
            finding("alpha", "R330", OUT_OF_CLASS_CWE, c0["flaws"][0]["file"], c0["flaws"][0]["line"], "wrong class"),
            finding("alpha", "R%d" % c0["flaws"][0]["cwe"], c0["flaws"][0]["cwe"], c0["files"][0], 4, "outside regions"),
        ],
        "bravo": [finding("bravo", "NOCWE", None, c1["files"][0], c1["flaws"][0]["line"], "unmapped rule")],
        "charlie": [
            finding("charlie", "R89", 89, "README.md", 3, "stray"),
            finding("charlie", "R89", 89, "build.xml", 12, "stray"),
            finding("charlie", "R476", 476, "testcases/Helper.java", 7, "stray"),
        ],
        "delta": [],
    }
    for tool, (fl, gd) in specs.items():
        rep = tool_report(tool, cases, fl, gd, extras[tool], rng)
        if tool == "alpha":
            rep = rep + rep[:3]  # exact duplicates
        write_jsonl(os.path.join(root, "reports", tool + ".jsonl"), rep)

    # 10-site corpus for small worked examples.
    root, cases = build_corpus("mini10", 10, 0, seed=10)
    write_manifest(root, cases, "synthetic-juliet-10", ".")
    rng = random.Random(1010)
    write_jsonl(os.path.join(root, "reports", "hit6.jsonl"), tool_report("hit6", cases, range(6), [0, 5], [], rng))
    write_jsonl(os.path.join(root, "reports", "tool_a.jsonl"), tool_report("tool_a", cases, range(0, 6), [], [], rng))
    write_jsonl(os.path.join(root, "reports", "tool_b.jsonl"), tool_report("tool_b", cases, range(3, 9), [], [], rng))
    write_jsonl(os.path.join(root, "reports", "empty.jsonl"), [])

    juliet_mini()
    gate_fixture()


class Src:
    def __init__(self):
        self.lines = []
        self.spans = []

    def add(self, *ls):
        self.lines.extend(ls)

    def func(self, sig, body, kind, brace_on_sig=False):
        start = len(self.lines) + 1
        if brace_on_sig:
            self.lines.append(sig + " {")
        else:
            self.lines.append(sig)
            self.lines.append("{")
        self.lines.extend("    " + b for b in body)
        self.lines.append("}")
        name = sig.split("(")[0].split()[-1].lstrip("*")
        self.spans.append((name, kind, start, len(self.lines)))

    def text(self, eol="\n", final_newline=True):
        t = eol.join(self.lines)
        return t + eol if final_newline else t


def juliet_mini():
    root = os.path.join(HERE, "juliet-mini")
    if os.path.exists(root):
        shutil.rmtree(root)
    files = {}
    cases = []

    def case(case_id, lang, cls, cwe, parts):
        flaws, goods, rels = [], [], []
        for rel, src in parts:
            rels.append(rel)
            for (n, k, s, e) in src.spans:
                if k == "bad":
                    flaws.append({"file": rel, "line": s, "endLine": e, "cwe": cwe})
                elif k == "good":
                    goods.append({"file": rel, "line": s, "endLine": e, "description": n})
        cases.append({"caseId": case_id, "language": lang, "targetClass": cls, "files": sorted(rels),
                      "flaws": sorted(flaws, key=lambda f: (f["file"], f["line"])),
                      "goods": sorted(goods, key=lambda g: (g["file"], g["line"]))})

    # Java: bad() spans 10-30, goodG2B() spans 32-50.
    j = Src()
    j.add("/* TEMPLATE GENERATED TESTCASE FILE", "Filename: CWE89_SQL_Injection__connect_tcp_execute_01.java",
          "*/", "package testcases.CWE89_SQL_Injection;", "", "import testcasesupport.*;", "import java.sql.*;",
          "public class CWE89_SQL_Injection__connect_tcp_execute_01 extends AbstractTestCase", "{")
    j.func("    public void bad() throws Throwable", ["    String data = \"x\"; // {"] * 18, "bad")
    j.add("")
    j.func("    private void goodG2B() throws Throwable", ["    String data = \"foo\";"] * 16, "good")
    j.add("}")
    rel = "testcases/CWE89_SQL_Injection/CWE89_SQL_Injection__connect_tcp_execute_01.java"
    files[rel] = j.text()
    case("CWE89_SQL_Injection__connect_tcp_execute_01", "java", "Injection", 89, [(rel, j)])

    # C, single file
    c = Src()
    c.add('#include "std_testcase.h"', "", "#ifndef OMITBAD", "")
    c.func("void CWE369_Divide_by_Zero__int_zero_divide_01_bad()",
           ["int data;", "data = 0;", "printIntLine(100 / data);", "/* } */", "char c = '}';"], "bad")
    c.add("", "#endif /* OMITBAD */", "", "#ifndef OMITGOOD", "")
    c.func("static void goodG2B()", ["int data;", "data = 2;", "printIntLine(100 / data);"], "good")
    c.add("")
    c.func("static void goodB2G()", ["int data = 0;", "if (data != 0)", "{", "    printIntLine(100 / data);", "}"], "good")
    c.add("")
    c.func("void CWE369_Divide_by_Zero__int_zero_divide_01_good()", ["goodG2B();", "goodB2G();"], "good")
    c.add("", "#endif /* OMITGOOD */", "", "#ifdef INCLUDEMAIN", "")
    c.func("int main(int argc, char * argv[])",
           ["srand( (unsigned)time(NULL) );", "CWE369_Divide_by_Zero__int_zero_divide_01_good();",
            "CWE369_Divide_by_Zero__int_zero_divide_01_bad();", "return 0;"], "other")
    c.add("", "#endif")
    rel = "testcases/CWE369_Divide_by_Zero/CWE369_Divide_by_Zero__int_zero_divide_01.c"
    files[rel] = c.text()
    case("CWE369_Divide_by_Zero__int_zero_divide_01", "c", "Number Handling", 369, [(rel, c)])

    # C, two-file flow variant
    a = Src()
    a.add('#include "std_testcase.h"', "", "void CWE476_NULL_Pointer_Dereference__int_51b_badSink(int * data);", "")
    a.func("void CWE476_NULL_Pointer_Dereference__int_51a_bad()",
           ["int * data;", "data = NULL;", "CWE476_NULL_Pointer_Dereference__int_51b_badSink(data);"], "bad")
    a.add("", "void CWE476_NULL_Pointer_Dereference__int_51b_goodG2BSink(int * data);", "")
    a.func("static void goodG2B()", ["int * data;", "int tmpData = 5;", "data = &tmpData;",
                                    "CWE476_NULL_Pointer_Dereference__int_51b_goodG2BSink(data);"], "good")
    a.add("")
    a.func("void CWE476_NULL_Pointer_Dereference__int_51a_good()", ["goodG2B();"], "good")
    b = Src()
    b.add('#include "std_testcase.h"', "")
    b.func("void CWE476_NULL_Pointer_Dereference__int_51b_badSink(int * data)",
           ["printIntLine(*data);"], "bad", brace_on_sig=True)
    b.add("")
    b.func("void CWE476_NULL_Pointer_Dereference__int_51b_goodG2BSink(int * data)",
           ["printIntLine(*data);"], "good", brace_on_sig=True)
    ra = "testcases/CWE476_NULL_Pointer_Dereference/CWE476_NULL_Pointer_Dereference__int_51a.c"
    rb = "testcases/CWE476_NULL_Pointer_Dereference/CWE476_NULL_Pointer_Dereference__int_51b.c"
    files[ra] = a.text()
    files[rb] = b.text()
    case("CWE476_NULL_Pointer_Dereference__int_51", "c", "Pointer and Reference Handling", 476, [(ra, a), (rb, b)])

    # C++ with namespace
    p = Src()
    p.add('#include "std_testcase.h"', "", "namespace CWE190_Integer_Overflow__int_add_01", "{", "", "#ifndef OMITBAD", "")
    p.func("void bad()", ["int data = INT_MAX;", "int result = data + 1;", "printIntLine(result);"], "bad")
    p.add("", "#endif /* OMITBAD */", "", "#ifndef OMITGOOD", "")
    p.func("static void goodG2B()", ["int data = 2;", "int result = data + 1;", "printIntLine(result);"], "good")
    p.add("")
    p.func("void good()", ["goodG2B();"], "good")
    p.add("", "#endif /* OMITGOOD */", "", "} /* close namespace */")
    rel = "testcases/CWE190_Integer_Overflow/CWE190_Integer_Overflow__int_add_01.cpp"
    files[rel] = p.text()
    case("CWE190_Integer_Overflow__int_add_01", "cpp", "Number Handling", 190, [(rel, p)])

    # Java with CRLF line endings and no trailing newline
    r = Src()
    r.add("package testcases.CWE78_OS_Command_Injection;", "", "public class CWE78_OS_Command_Injection__crlf_01 extends AbstractTestCase", "{")
    r.func("    public void bad() throws Throwable", ["    Runtime.getRuntime().exec(\"ls \" + data);"], "bad")
    r.add("")
    r.func("    public void good() throws Throwable", ["    goodB2G();"], "good")
    r.add("")
    r.func("    private void goodB2G() throws Throwable", ["    Runtime.getRuntime().exec(\"ls\");"], "good")
    r.add("}")
    rel = "testcases/CWE78_OS_Command_Injection/CWE78_OS_Command_Injection__crlf_01.java"
    files[rel] = r.text(eol="\r\n", final_newline=False)
    case("CWE78_OS_Command_Injection__crlf_01", "java", "Injection", 78, [(rel, r)])

    # CWE with no taxonomy class
    u = Src()
    u.add("package testcases.CWE9999_Unknown_Weakness;", "", "public class CWE9999_Unknown_Weakness__basic_01 extends AbstractTestCase", "{")
    u.func("    public void bad() throws Throwable", ["    doSomething();"], "bad")
    u.add("")
    u.func("    public void good() throws Throwable", ["    doSomethingElse();"], "good")
    u.add("}")
    rel = "testcases/CWE9999_Unknown_Weakness/CWE9999_Unknown_Weakness__basic_01.java"
    files[rel] = u.text()
    case("CWE9999_Unknown_Weakness__basic_01", "java", "Unclassified", 9999, [(rel, u)])

    # no bad function: dropped with a warning
    d = Src()
    d.add("package testcases.CWE561_Dead_Code;", "", "public class CWE561_Dead_Code__nobad_01 extends AbstractTestCase", "{")
    d.func("    public void good() throws Throwable", ["    return;"], "good")
    d.add("}")
    files["testcases/CWE561_Dead_Code/CWE561_Dead_Code__nobad_01.java"] = d.text()

    files["testcasesupport/IO.java"] = "package testcasesupport;\n\npublic class IO\n{\n    public static void bad() { }\n}\n"
    files["testcases/CWE89_SQL_Injection/CWE89_notes.txt"] = "not a source file\n"

    for rel, text in files.items():
        path = os.path.join(root, rel)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "w", newline="") as f:
            f.write(text)
    cases.sort(key=lambda c: c["caseId"])
    with open(os.path.join(HERE, "juliet-mini.expected.json"), "w", newline="\n") as f:
        json.dump({"cases": cases, "dropped": ["CWE561_Dead_Code__nobad_01"]}, f, indent=2)
        f.write("\n")


def sarif_doc(tool, results):
    rules = sorted({r[0] for r in results})
    return {
        "$schema": "https://json.schemastore.org/sarif-2.1.0.json",
        "version": "2.1.0",
        "runs": [{
            "tool": {"driver": {"name": tool, "version": "1.0", "rules": [
                {"id": rid, "properties": {"tags": ["security", "external/cwe/cwe-%d" % cwe]}}
                for rid, cwe in sorted({(r[0], r[1]) for r in results})
            ]}},
            "results": [{
                "ruleId": rid,
                "level": level,
                "message": {"text": msg},
                "locations": [{"physicalLocation": {
                    "artifactLocation": {"uri": uri},
                    "region": {"startLine": line},
                }}],
            } for rid, cwe, uri, line, level, msg in results],
        }],
    }


def gate_fixture():
    """A three-file submission plus canned output of two analyzers.

    mock-a reports 3 findings and mock-b 2; they share exactly one
    (class, file, line) key, so the merged report holds 4 findings.
    """
    import zipfile
    root = os.path.join(HERE, "gate")
    shutil.rmtree(root, ignore_errors=True)
    files = {
        "src/Login.java": "\n".join(["// login"] * 11 + ["stmt.execute(\"SELECT * FROM u WHERE n='\" + name + \"'\");"] + ["// tail"] * 10) + "\n",
        "src/Util.java": "\n".join("// util line %d" % i for i in range(1, 41)) + "\n",
        "README.md": "Sample submission.\n",
    }
    os.makedirs(root)
    with zipfile.ZipFile(os.path.join(root, "app.zip"), "w", zipfile.ZIP_DEFLATED) as z:
        for name in sorted(files):
            info = zipfile.ZipInfo(name, date_time=(2020, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            z.writestr(info, files[name])
    a = sarif_doc("mock-a", [
        ("A-SQLI", 89, "src/Login.java", 12, "error", "SQL built from user input"),
        ("A-NPD", 476, "src/Util.java", 7, "warning", "possible null dereference"),
        ("A-DIV", 369, "src/Util.java", 15, "note", "possible division by zero"),
    ])
    b = sarif_doc("mock-b", [
        ("B-HQL", 564, "src/Login.java", 12, "warning", "query injection"),
        ("B-ERR", 390, "src/Util.java", 30, "warning", "error detected without action"),
    ])
    for name, doc in [("mock-a.sarif", a), ("mock-b.sarif", b)]:
        with open(os.path.join(root, name), "w", newline="\n") as f:
            json.dump(doc, f, indent=2)
            f.write("\n")


if __name__ == "__main__":
    main()
