use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::{parse_report, parse_report_auto, NormalizedReport, OutputFormat, RuleMap};
use crate::error::{Error, IoContext, Result};
use crate::finding::ToolId;

const STDERR_TAIL: usize = 4096;

/// How to invoke one external analyzer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AnalyzerSpec {
    pub tool: ToolId,
    /// Argument vector; `{target}` and `{output}` are substituted. Without an
    /// `{output}` placeholder, stdout is captured as the report.
    pub command: Vec<String>,
    pub output_format: OutputFormat,
    /// Seconds.
    pub timeout: f64,
    #[serde(default)]
    pub rule_map: Option<RuleMap>,
}

impl AnalyzerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.tool.name.is_empty() {
            return Err(Error::InvalidAnalyzerSpec("tool name is empty".into()));
        }
        if self.command.first().is_none_or(|c| c.is_empty()) {
            return Err(Error::InvalidAnalyzerSpec(format!("{}: command is empty", self.tool)));
        }
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(Error::InvalidAnalyzerSpec(format!("{}: timeout must be positive", self.tool)));
        }
        Ok(())
    }

    pub fn load_all(path: &Path) -> Result<Vec<AnalyzerSpec>> {
        let text = std::fs::read_to_string(path)
            .io_context(|| format!("reading analyzer specs {}", path.display()))?;
        let specs: Vec<AnalyzerSpec> = serde_json::from_str(&text)?;
        specs.iter().try_for_each(AnalyzerSpec::validate)?;
        Ok(specs)
    }

    /// Short stable digest of the invocation, used to address cached output.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("spec serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..16].to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExecutionRecord {
    pub tool: ToolId,
    pub argv: Vec<String>,
    pub exit_code: Option<i32>,
    pub duration_ms: u64,
    pub stderr_tail: String,
    pub timed_out: bool,
    pub degraded: bool,
    pub output_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct AnalyzerRun {
    pub report: NormalizedReport,
    pub record: ExecutionRecord,
}

fn kill_tree(child: &mut Child) {
    #[cfg(unix)]
    unsafe {
        // the child leads its own process group
        libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
    }
    let _ = child.kill();
    let _ = child.wait();
}

fn tail(bytes: &[u8]) -> String {
    let start = bytes.len().saturating_sub(STDERR_TAIL);
    String::from_utf8_lossy(&bytes[start..]).into_owned()
}

/// Runs the analyzer against `target`, writing its output and an
/// `execution.json` record under `out_dir`.
pub fn run_analyzer(spec: &AnalyzerSpec, target: &Path, out_dir: &Path) -> Result<AnalyzerRun> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir).io_context(|| format!("creating {}", out_dir.display()))?;
    let output_path = out_dir.join("output");
    let _ = std::fs::remove_file(&output_path);
    let target_str = target.to_string_lossy();
    let output_str = output_path.to_string_lossy();
    let argv: Vec<String> = spec
        .command
        .iter()
        .map(|a| a.replace("{target}", &target_str).replace("{output}", &output_str))
        .collect();
    let capture_stdout = !spec.command.iter().any(|a| a.contains("{output}"));

    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..]).stdin(Stdio::null()).stderr(Stdio::piped());
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }
    if capture_stdout {
        let file = File::create(&output_path).io_context(|| format!("creating {}", output_path.display()))?;
        cmd.stdout(file);
    } else {
        cmd.stdout(Stdio::null());
    }

    let started = Instant::now();
    let mut child = cmd.spawn().map_err(|e| Error::AnalyzerFailed {
        tool: spec.tool.name.clone(),
        code: None,
        stderr_tail: format!("cannot start {}: {e}", argv[0]),
    })?;
    let mut stderr = child.stderr.take().expect("stderr piped");
    let stderr_buf = Arc::new(Mutex::new(Vec::new()));
    let stderr_reader = {
        let buf = Arc::clone(&stderr_buf);
        std::thread::spawn(move || {
            let mut chunk = [0u8; 4096];
            while let Ok(n) = stderr.read(&mut chunk) {
                if n == 0 {
                    break;
                }
                buf.lock().extend_from_slice(&chunk[..n]);
            }
        })
    };

    let timeout = Duration::from_secs_f64(spec.timeout);
    let status = loop {
        if let Some(status) = child.try_wait().io_context(|| format!("waiting for {}", spec.tool))? {
            break Some(status);
        }
        if started.elapsed() >= timeout {
            kill_tree(&mut child);
            break None;
        }
        std::thread::sleep(Duration::from_millis(10));
    };
    // a detached grandchild may keep stderr open; only wait for it on normal exit
    if status.is_some() {
        let _ = stderr_reader.join();
    }
    let stderr_tail = tail(&stderr_buf.lock());

    let mut record = ExecutionRecord {
        tool: spec.tool.clone(),
        argv,
        exit_code: status.and_then(|s| s.code()),
        duration_ms: started.elapsed().as_millis() as u64,
        stderr_tail,
        timed_out: status.is_none(),
        degraded: false,
        output_path: output_path.clone(),
    };
    let write_record = |record: &ExecutionRecord| -> Result<()> {
        let path = out_dir.join("execution.json");
        std::fs::write(&path, serde_json::to_vec_pretty(record)?)
            .io_context(|| format!("writing {}", path.display()))
    };

    let Some(status) = status else {
        write_record(&record)?;
        return Err(Error::AnalyzerTimeout {
            tool: spec.tool.name.clone(),
            timeout,
        });
    };

    let parsed = std::fs::read(&output_path)
        .ok()
        .filter(|bytes| !bytes.is_empty())
        .map(|bytes| match &spec.rule_map {
            Some(map) => parse_report(&spec.output_format, &bytes, map, target),
            None => parse_report_auto(&spec.output_format, &bytes, target),
        });

    let report = match (status.success(), parsed) {
        (true, Some(Ok(report))) => report,
        (true, Some(Err(e))) => {
            write_record(&record)?;
            return Err(e);
        }
        (true, None) => {
            write_record(&record)?;
            return Err(Error::MalformedReport(format!("{} produced no output", spec.tool)));
        }
        (false, Some(Ok(mut report))) => {
            record.degraded = true;
            report.degraded = true;
            report
        }
        (false, _) => {
            write_record(&record)?;
            return Err(Error::AnalyzerFailed {
                tool: spec.tool.name.clone(),
                code: record.exit_code,
                stderr_tail: record.stderr_tail.clone(),
            });
        }
    };
    write_record(&record)?;
    Ok(AnalyzerRun { report, record })
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;

    const SARIF: &str = r#"{"runs":[{"tool":{"driver":{"name":"sh-mock"}},"results":[{"ruleId":"CWE-89","locations":[{"physicalLocation":{"artifactLocation":{"uri":"a.java"},"region":{"startLine":2}}}]}]}]}"#;

    fn spec(script: &str, timeout: f64) -> AnalyzerSpec {
        AnalyzerSpec {
            tool: ToolId::new("sh-mock", "1"),
            command: vec!["sh".into(), "-c".into(), script.into(), "sh".into(), "{target}".into(), "{output}".into()],
            output_format: OutputFormat::Sarif,
            timeout,
            rule_map: None,
        }
    }

    #[test]
    fn runs_and_parses_output() {
        let dir = tempfile::tempdir().unwrap();
        let run = run_analyzer(&spec(&format!("printf '%s' '{SARIF}' > \"$2\""), 10.0), dir.path(), &dir.path().join("out")).unwrap();
        assert_eq!(run.report.findings.len(), 1);
        assert_eq!(run.record.exit_code, Some(0));
        assert!(!run.record.degraded);
        assert!(dir.path().join("out/execution.json").is_file());
    }

    #[test]
    fn stdout_is_captured_without_output_placeholder() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = spec("", 10.0);
        s.command = vec!["sh".into(), "-c".into(), format!("printf '%s' '{SARIF}'")];
        let run = run_analyzer(&s, dir.path(), &dir.path().join("out")).unwrap();
        assert_eq!(run.report.findings.len(), 1);
    }

    #[test]
    fn timeout_kills_the_process() {
        let dir = tempfile::tempdir().unwrap();
        let started = Instant::now();
        let err = run_analyzer(&spec("sleep 5", 0.3), dir.path(), &dir.path().join("out")).unwrap_err();
        assert!(matches!(err, Error::AnalyzerTimeout { .. }), "{err}");
        assert!(started.elapsed() < Duration::from_secs(4));
    }

    #[test]
    fn nonzero_exit_with_output_is_degraded() {
        let dir = tempfile::tempdir().unwrap();
        let script = format!("printf '%s' '{SARIF}' > \"$2\"; echo boom >&2; exit 2");
        let run = run_analyzer(&spec(&script, 10.0), dir.path(), &dir.path().join("out")).unwrap();
        assert!(run.report.degraded && run.record.degraded);
        assert_eq!(run.record.exit_code, Some(2));
        assert_eq!(run.record.stderr_tail.trim(), "boom");
    }

    #[test]
    fn nonzero_exit_without_output_fails() {
        let dir = tempfile::tempdir().unwrap();
        let err = run_analyzer(&spec("exit 3", 10.0), dir.path(), &dir.path().join("out")).unwrap_err();
        assert!(matches!(err, Error::AnalyzerFailed { code: Some(3), .. }));
    }

    #[test]
    fn garbage_output_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let err = run_analyzer(&spec("echo nope > \"$2\"", 10.0), dir.path(), &dir.path().join("out")).unwrap_err();
        assert!(matches!(err, Error::MalformedReport(_)));
    }

    #[test]
    fn spec_validation() {
        let mut s = spec("true", 0.0);
        assert!(s.validate().is_err());
        s.timeout = 1.0;
        s.command.clear();
        assert!(s.validate().is_err());
    }
}
