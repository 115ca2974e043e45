//! Recall, precision and F1 from match counts.
//!
//! TN is carried along but never enters a formula. A zero denominator yields
//! 0 plus a flag, so ranked tables keep a total order.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::{Counts, MatchResult};
use crate::taxonomy::UNCLASSIFIED;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Degenerate {
    /// tp + fp = 0: precision is undefined.
    NoPositivesReported,
    /// tp + fn = 0: recall is undefined.
    NoFlawsInScope,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreCard {
    pub counts: Counts,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub degenerate: BTreeSet<Degenerate>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 { 0.0 } else { num as f64 / den as f64 }
}

pub fn score(counts: Counts) -> ScoreCard {
    let Counts { tp, fp, fn_, .. } = counts;
    let mut degenerate = BTreeSet::new();
    if tp + fp == 0 {
        degenerate.insert(Degenerate::NoPositivesReported);
    }
    if tp + fn_ == 0 {
        degenerate.insert(Degenerate::NoFlawsInScope);
    }
    ScoreCard {
        counts,
        recall: ratio(tp, tp + fn_),
        precision: ratio(tp, tp + fp),
        // 2rp/(r+p) with the fractions cleared, so equal ratios tie exactly
        f1: ratio(2 * tp, 2 * tp + fp + fn_),
        degenerate,
    }
}

/// One card per taxonomy class, in taxonomy order. Cases outside the taxonomy
/// are left out here; they still count toward the totals.
pub fn score_by_class(result: &MatchResult) -> Vec<(String, ScoreCard)> {
    result
        .per_class
        .iter()
        .filter(|(label, _)| *label != UNCLASSIFIED)
        .map(|(label, counts)| (label.to_string(), score(*counts)))
        .collect()
}

/// Ranking key shared by scorecard tables and combination searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    F1,
    Precision,
    Recall,
    Detections,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::F1, Metric::Precision, Metric::Recall, Metric::Detections];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::F1 => "f1",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::Detections => "detections",
        }
    }

    pub fn value(self, card: &ScoreCard, detections: u64) -> f64 {
        match self {
            Metric::F1 => card.f1,
            Metric::Precision => card.precision,
            Metric::Recall => card.recall,
            Metric::Detections => detections as f64,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown metric {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRow {
    pub tool: String,
    pub detections: u64,
    #[serde(flatten)]
    pub card: ScoreCard,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ScoreTable {
    pub sort_key: Metric,
    pub manifest: String,
    pub rows: Vec<ScoreRow>,
}

pub const CSV_HEADER: &str = "tool,detections,tp,fp,fn,recall,precision,f1";

/// Ranks results best-first by `key`, ties by tool name.
pub fn scorecard_table(results: &[MatchResult], key: Metric) -> Result<ScoreTable> {
    let manifest = results.first().map(|r| r.manifest.clone()).unwrap_or_default();
    if results.iter().any(|r| r.manifest != manifest) {
        return Err(Error::ManifestMismatch);
    }
    let mut rows: Vec<ScoreRow> = results
        .iter()
        .map(|r| ScoreRow {
            tool: r.tool.clone(),
            detections: r.detections,
            card: score(r.totals),
        })
        .collect();
    rows.sort_by(|a, b| {
        let (va, vb) = (key.value(&a.card, a.detections), key.value(&b.card, b.detections));
        vb.total_cmp(&va).then_with(|| a.tool.cmp(&b.tool))
    });
    Ok(ScoreTable {
        sort_key: key,
        manifest,
        rows,
    })
}

/// Two-decimal presentation.
pub fn fmt2(x: f64) -> String {
    format!("{x:.2}")
}

impl ScoreTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let c = &r.card.counts;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.4},{:.4},{:.4}",
                csv_field(&r.tool),
                r.detections,
                c.tp,
                c.fp,
                c.fn_,
                r.card.recall,
                r.card.precision,
                r.card.f1
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let header = ["tool", "detections", "tp", "fp", "fn", "recall", "precision", "f1"];
        let body: Vec<[String; 8]> = self
            .rows
            .iter()
            .map(|r| {
                let c = &r.card.counts;
                [
                    r.tool.clone(),
                    r.detections.to_string(),
                    c.tp.to_string(),
                    c.fp.to_string(),
                    c.fn_.to_string(),
                    fmt2(r.card.recall),
                    fmt2(r.card.precision),
                    fmt2(r.card.f1),
                ]
            })
            .collect();
        align(&header, &body)
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Left-aligns the first column and right-aligns the rest.
pub(crate) fn align<const N: usize>(header: &[&str; N], rows: &[[String; N]]) -> String {
    let mut width = header.map(str::len);
    for row in rows {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[&str]| {
        let mut text = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                text.push_str("  ");
            }
            if i == 0 {
                let _ = write!(text, "{cell:<w$}", w = width[i]);
            } else {
                let _ = write!(text, "{cell:>w$}", w = width[i]);
            }
        }
        out.push_str(text.trim_end());
        out.push('\n');
    };
    line(header);
    for row in rows {
        line(&row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}
