//! Function extents in C, C++ and Java sources via a comment- and
//! string-aware brace matcher. No parsing beyond that.

use std::sync::LazyLock;

use regex::Regex;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionExtent {
    pub name: String,
    pub start_line: u32,
    pub end_line: u32,
}

/// Splits on LF after folding CRLF. A trailing fragment without a newline is a
/// line; a final newline does not open another one.
pub fn split_lines(text: &str) -> Vec<&str> {
    let mut lines: Vec<&str> = text
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect();
    if text.ends_with('\n') || text.is_empty() {
        lines.pop();
    }
    lines
}

static SIGNATURE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^(?:[A-Za-z_][\w:<>,\[\]\*&\s]*?[\s\*&])?([A-Za-z_]\w*)\s*\(([^;{}()]*)\)\s*(?:const\s*)?(?:throws\s+[\w.,\s]+?)?\s*\{?\s*$",
    )
    .unwrap()
});

const NOT_FUNCTIONS: &[&str] = &[
    "if", "while", "for", "switch", "catch", "return", "else", "do", "sizeof", "synchronized",
    "new", "try", "case",
];

#[derive(Clone, Copy, PartialEq)]
enum Lex {
    Code,
    BlockComment,
    Str,
    Char,
}

/// Blanks comments and literal contents so braces inside them are ignored.
fn code_only(lines: &[&str]) -> Vec<String> {
    let mut state = Lex::Code;
    let mut out = Vec::with_capacity(lines.len());
    for line in lines {
        let mut code = String::with_capacity(line.len());
        let mut chars = line.chars().peekable();
        // string and char literals do not span lines in the supported languages
        if matches!(state, Lex::Str | Lex::Char) {
            state = Lex::Code;
        }
        while let Some(c) = chars.next() {
            match state {
                Lex::Code => match c {
                    '/' if chars.peek() == Some(&'/') => break,
                    '/' if chars.peek() == Some(&'*') => {
                        chars.next();
                        state = Lex::BlockComment;
                        code.push(' ');
                    }
                    '"' => {
                        state = Lex::Str;
                        code.push('"');
                    }
                    '\'' => {
                        state = Lex::Char;
                        code.push('\'');
                    }
                    c => code.push(c),
                },
                Lex::BlockComment => {
                    if c == '*' && chars.peek() == Some(&'/') {
                        chars.next();
                        state = Lex::Code;
                    }
                }
                Lex::Str | Lex::Char => {
                    let close = if state == Lex::Str { '"' } else { '\'' };
                    if c == '\\' {
                        chars.next();
                    } else if c == close {
                        state = Lex::Code;
                        code.push(close);
                    }
                }
            }
        }
        out.push(code);
    }
    out
}

fn signature_name(code: &str) -> Option<String> {
    let trimmed = code.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.contains('=') {
        return None;
    }
    let caps = SIGNATURE.captures(trimmed)?;
    let name = caps.get(1)?.as_str();
    let prefix = &trimmed[..caps.get(1)?.start()];
    if NOT_FUNCTIONS.contains(&name)
        || prefix
            .split_whitespace()
            .any(|w| NOT_FUNCTIONS.contains(&w))
    {
        return None;
    }
    Some(name.to_string())
}

/// Top-level function and method bodies, in source order. Bodies nested in a
/// captured function (local classes, lambdas) belong to the enclosing extent.
pub fn function_extents(text: &str) -> Vec<FunctionExtent> {
    let lines = split_lines(text);
    let code = code_only(&lines);
    let mut extents = Vec::new();
    let mut depth: i64 = 0;
    // (name, start line) of a signature still waiting for its opening brace
    let mut pending: Option<(String, u32)> = None;
    // (name, start line, depth outside the body)
    let mut open: Option<(String, u32, i64)> = None;

    for (idx, line) in code.iter().enumerate() {
        let line_no = idx as u32 + 1;
        if open.is_none() {
            if let Some(name) = signature_name(line) {
                pending = Some((name, line_no));
            }
        }
        for c in line.chars() {
            match c {
                '{' => {
                    if open.is_none() {
                        if let Some((name, start)) = pending.take() {
                            open = Some((name, start, depth));
                        }
                    }
                    depth += 1;
                }
                '}' => {
                    depth -= 1;
                    if let Some((_, _, outer)) = &open {
                        if depth == *outer {
                            let (name, start_line, _) = open.take().unwrap();
                            extents.push(FunctionExtent {
                                name,
                                start_line,
                                end_line: line_no,
                            });
                        }
                    }
                }
                ';' => pending = None,
                _ => {}
            }
        }
        // a signature must be followed directly by its body
        if let Some((_, start)) = &pending {
            if *start != line_no && !line.trim().is_empty() {
                pending = None;
            }
        }
    }
    extents
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spans(text: &str) -> Vec<(String, u32, u32)> {
        function_extents(text)
            .into_iter()
            .map(|e| (e.name, e.start_line, e.end_line))
            .collect()
    }

    #[test]
    fn line_splitting_rules() {
        assert_eq!(split_lines("a\nb\n"), vec!["a", "b"]);
        assert_eq!(split_lines("a\r\nb"), vec!["a", "b"]);
        assert_eq!(split_lines(""), Vec::<&str>::new());
        assert_eq!(split_lines("\n"), vec![""]);
    }

    #[test]
    fn java_methods_inside_class() {
        let src = "class A\n{\n    public void bad() throws Throwable\n    {\n        x(\"}\");\n    }\n\n    private void goodG2B() throws Throwable {\n        /* { */ y();\n    }\n}\n";
        assert_eq!(
            spans(src),
            vec![("bad".to_string(), 3, 6), ("goodG2B".to_string(), 8, 10)]
        );
    }

    #[test]
    fn c_functions_skip_prototypes_and_control_flow() {
        let src = "void sink(int * data);\n\nvoid CWE476_x_51a_bad()\n{\n    if (x)\n    {\n        sink(data);\n    }\n}\nstatic int * helper(char c, int n[]) {\n    char q = '}';\n    return 0;\n}\n";
        assert_eq!(
            spans(src),
            vec![("CWE476_x_51a_bad".to_string(), 3, 9), ("helper".to_string(), 10, 13)]
        );
    }

    #[test]
    fn anonymous_classes_stay_in_enclosing_method() {
        let src = "class A {\n  void bad() {\n    Runnable r = new Runnable() {\n      public void run() { }\n    };\n  }\n}\n";
        assert_eq!(spans(src), vec![("bad".to_string(), 2, 6)]);
    }

    #[test]
    fn block_comment_spanning_lines() {
        let src = "/* void fake()\n{ */\nvoid real()\n{\n}\n";
        assert_eq!(spans(src), vec![("real".to_string(), 3, 5)]);
    }
}
