//! Stand-in analyzer for tests and demos: copies a canned report to the
//! output path.
//!
//! usage: mock-analyzer <report> <output> [--exit N] [--sleep SECONDS] [--calls FILE]

use std::process::ExitCode;
use std::time::Duration;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut positional = Vec::new();
    let mut exit = 0u8;
    let mut sleep = 0.0f64;
    let mut calls = None;
    let mut it = args.iter();
    while let Some(a) = it.next() {
        match a.as_str() {
            "--exit" => exit = it.next().and_then(|v| v.parse().ok()).unwrap_or(1),
            "--sleep" => sleep = it.next().and_then(|v| v.parse().ok()).unwrap_or(0.0),
            "--calls" => calls = it.next().cloned(),
            _ => positional.push(a.clone()),
        }
    }
    let [report, output] = positional.as_slice() else {
        eprintln!("usage: mock-analyzer <report> <output> [--exit N] [--sleep SECONDS] [--calls FILE]");
        return ExitCode::from(2);
    };
    if let Some(path) = calls {
        use std::io::Write;
        if let Ok(mut f) = std::fs::OpenOptions::new().create(true).append(true).open(path) {
            let _ = writeln!(f, "called");
        }
    }
    if sleep > 0.0 {
        std::thread::sleep(Duration::from_secs_f64(sleep));
    }
    if let Err(e) = std::fs::copy(report, output) {
        eprintln!("mock-analyzer: {report}: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(exit)
}
