//! `sastgate` command line: corpus scanning, report normalization, scoring,
//! combination search and the gate HTTP server.

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sastgate_core::adapters::OutputFormat;
use sastgate_core::metrics::Metric;

mod commands;
pub mod server;

pub use commands::{cmd_combine, cmd_normalize, cmd_scan_corpus, cmd_score, cmd_serve};

/// Exit code for a successful run.
pub const EXIT_OK: u8 = 0;
/// Malformed input, invariant violation, I/O failure.
pub const EXIT_DOMAIN: u8 = 1;
/// Bad flags or arguments.
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "sastgate", version, about = "Benchmark, combine and gate static security analyzers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a ground-truth manifest from a Juliet-style source tree.
    ScanCorpus(ScanCorpusArgs),
    /// Convert an analyzer report into normalized JSONL.
    Normalize(NormalizeArgs),
    /// Score normalized reports against a manifest.
    Score(ScoreArgs),
    /// Rank tool combinations against a manifest.
    Combine(CombineArgs),
    /// Run the gate HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ScanCorpusArgs {
    /// Corpus root directory.
    pub root: PathBuf,
    /// Where to write the manifest.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Languages to include, comma separated (c, cpp, java). Default: all.
    #[arg(long, value_delimiter = ',')]
    pub languages: Vec<String>,
    /// Taxonomy file, or the name of a bundled taxonomy.
    #[arg(long)]
    pub taxonomy: Option<String>,
    /// Value recorded as `corpusRoot`. Default: the root relative to the
    /// manifest's directory when it lies beneath it, else the root as given.
    #[arg(long)]
    pub corpus_root: Option<String>,
}

#[derive(Debug, Args)]
pub struct NormalizeArgs {
    /// Analyzer report to read.
    pub input: PathBuf,
    /// Input format: sarif, or a native parser name (pmd, spotbugs, jsonl).
    #[arg(long, default_value = "sarif", value_parser = parse_format)]
    pub format: OutputFormat,
    /// Rule map file, or the name of a bundled map. Default: picked by tool name.
    #[arg(long)]
    pub rule_map: Option<String>,
    /// Directory the analyzer scanned; finding paths are made relative to it.
    #[arg(long, alias = "target-root", default_value = ".")]
    pub corpus_root: PathBuf,
    /// Taxonomy used to fill in weakness classes.
    #[arg(long)]
    pub taxonomy: Option<String>,
    /// Write JSONL here instead of stdout.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Ground-truth manifest.
    #[arg(short, long)]
    pub manifest: PathBuf,
    /// Lines of slack around each region.
    #[arg(long, default_value_t = 0)]
    pub line_window: u32,
    /// Count any finding in a case, regardless of its weakness class.
    #[arg(long)]
    pub lenient: bool,
    /// Normalized JSONL reports (SARIF files are normalized on the fly).
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub matching: MatchArgs,
    #[arg(long, value_enum, default_value = "text")]
    pub format: TableFormat,
    /// Shorthand for `--format json`.
    #[arg(long, conflicts_with = "format")]
    pub json: bool,
    /// Also print F1 per weakness class.
    #[arg(long)]
    pub per_class: bool,
    /// Row order.
    #[arg(long, default_value = "f1", value_parser = parse_metric)]
    pub sort: Metric,
    /// Write the table here instead of stdout.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    Exhaustive,
    Greedy,
}

#[derive(Debug, Args)]
pub struct CombineArgs {
    #[command(flatten)]
    pub matching: MatchArgs,
    #[arg(long, value_enum, default_value = "exhaustive")]
    pub strategy: Strategy,
    #[arg(long, default_value = "f1", value_parser = parse_metric)]
    pub metric: Metric,
    /// Rows to print; the selected set is always shown.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    /// Also print the best set for every metric (exhaustive only).
    #[arg(long)]
    pub best_per_metric: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Gate config file.
    #[arg(long, env = "SASTGATE_CONFIG")]
    pub config: PathBuf,
    /// Overrides the configured port.
    #[arg(long, env = "SASTGATE_PORT")]
    pub port: Option<u16>,
    /// Overrides the configured storage root.
    #[arg(long, env = "SASTGATE_STORAGE_ROOT")]
    pub storage_root: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    s.parse().map_err(|e: sastgate_core::Error| e.to_string())
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse().map_err(|e: sastgate_core::Error| e.to_string())
}

/// Error that maps to the usage exit code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<sastgate_core::Error>() {
        Some(sastgate_core::Error::UnknownFormat(_)) => EXIT_USAGE,
        _ => EXIT_DOMAIN,
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::ScanCorpus(a) => cmd_scan_corpus(&a),
        Command::Normalize(a) => cmd_normalize(&a),
        Command::Score(a) => cmd_score(&a),
        Command::Combine(a) => cmd_combine(&a),
        Command::Serve(a) => cmd_serve(&a),
    }
}
