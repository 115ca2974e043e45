//! Union ensembles of analyzer reports and the search for the best subset.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapters::{Diagnostics, NormalizedReport};
use crate::corpus::GroundTruthManifest;
use crate::error::{Error, Result};
use crate::finding::{DedupKey, DedupPolicy, Finding, ToolId};
use crate::matcher::{match_report, MatchConfig};
use crate::metrics::{align, fmt2, score, Metric, ScoreCard};

/// Largest tool set the exhaustive search accepts (2^16 - 1 subsets).
pub const MAX_EXHAUSTIVE_TOOLS: usize = 16;

/// Several reports merged into one detector.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    /// Sorted by tool name.
    pub members: Vec<ToolId>,
    pub merged_report: NormalizedReport,
    pub policy: DedupPolicy,
    /// Per merged finding, the names of every tool that reported its key.
    pub attribution: Vec<BTreeSet<String>>,
}

impl Ensemble {
    /// Number of distinct tools behind merged finding `i`.
    pub fn agreement(&self, i: usize) -> usize {
        self.attribution[i].len()
    }

    pub fn keys(&self) -> Vec<DedupKey> {
        self.merged_report.findings.iter().map(|f| self.policy.key(f)).collect()
    }

    /// Findings reported by at least `k` distinct tools. `k = 1` is the plain
    /// union; `k = members` is the intersection. Experimental: the search and
    /// the scorecards only ever use the union.
    pub fn with_min_agreement(&self, k: usize) -> NormalizedReport {
        let mut report = self.merged_report.clone();
        report.findings = self
            .merged_report
            .findings
            .iter()
            .zip(&self.attribution)
            .filter(|(_, tools)| tools.len() >= k)
            .map(|(f, _)| f.clone())
            .collect();
        report.unmapped_count = report.findings.iter().filter(|f| f.cwe.is_none()).count();
        report
    }
}

/// `a+b+c` over sorted member names.
pub fn ensemble_name<S: AsRef<str>>(members: &[S]) -> String {
    let mut names: Vec<&str> = members.iter().map(AsRef::as_ref).collect();
    names.sort_unstable();
    names.join("+")
}

/// Union of all findings, one per dedup key. On collision the finding from
/// the alphabetically-first tool is kept. Classify findings beforehand when
/// the key uses the weakness class.
pub fn merge(reports: &[&NormalizedReport], policy: &DedupPolicy) -> Result<Ensemble> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidConfig("an ensemble needs at least one report".into()))?;
    if let Some(other) = reports.iter().find(|r| r.target != first.target) {
        return Err(Error::TargetMismatch {
            expected: first.target.clone(),
            found: other.target.clone(),
        });
    }
    let mut ordered: Vec<&NormalizedReport> = reports.to_vec();
    ordered.sort_by(|a, b| a.tool.name.cmp(&b.tool.name).then_with(|| a.tool.version.cmp(&b.tool.version)));

    let mut members: Vec<ToolId> = Vec::new();
    let mut slot: HashMap<DedupKey, usize> = HashMap::new();
    let mut findings: Vec<Finding> = Vec::new();
    let mut attribution: Vec<BTreeSet<String>> = Vec::new();
    let mut diagnostics = Diagnostics::default();
    let mut degraded = false;

    for report in &ordered {
        if !members.contains(&report.tool) {
            members.push(report.tool.clone());
        }
        degraded |= report.degraded;
        let d = &report.diagnostics;
        diagnostics.missing_location += d.missing_location;
        diagnostics.outside_target += d.outside_target;
        diagnostics.missing_rule += d.missing_rule;
        diagnostics.dropped_unmapped += d.dropped_unmapped;

        for f in &report.findings {
            let key = policy.key(f);
            let i = *slot.entry(key).or_insert_with(|| {
                findings.push(f.clone());
                attribution.push(BTreeSet::new());
                findings.len() - 1
            });
            attribution[i].insert(f.tool.name.clone());
        }
    }

    // canonical order, carrying attribution along
    let mut paired: Vec<(Finding, BTreeSet<String>)> = findings.into_iter().zip(attribution).collect();
    paired.sort_by(|a, b| a.0.sort_key().cmp(&b.0.sort_key()).then_with(|| a.0.tool.name.cmp(&b.0.tool.name)));
    let (findings, attribution): (Vec<_>, Vec<_>) = paired.into_iter().unzip();

    let names: Vec<&str> = members.iter().map(|t| t.name.as_str()).collect();
    let tool = if members.len() == 1 {
        members[0].clone()
    } else {
        ToolId::new(ensemble_name(&names), "")
    };
    // NormalizedReport::new sorts stably, so attribution stays aligned
    let mut merged = NormalizedReport::new(tool, first.target.clone(), findings);
    merged.diagnostics = diagnostics;
    merged.degraded = degraded;
    merged.produced_at = ordered.iter().map(|r| r.produced_at).max().unwrap_or(merged.produced_at);
    Ok(Ensemble {
        members,
        merged_report: merged,
        policy: policy.clone(),
        attribution,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Objective {
    pub metric: Metric,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Maximize,
}

impl Objective {
    pub fn maximize(metric: Metric) -> Self {
        Objective {
            metric,
            direction: Direction::Maximize,
        }
    }

    /// Text for the "type" column of the best row.
    pub fn best_label(&self) -> &'static str {
        match self.metric {
            Metric::F1 => "best f1",
            Metric::Precision => "best precision",
            Metric::Recall => "best recall",
            Metric::Detections => "most detections",
        }
    }
}

impl From<Metric> for Objective {
    fn from(metric: Metric) -> Self {
        Objective::maximize(metric)
    }
}

/// One evaluated member set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetScore {
    /// Sorted member names.
    pub members: Vec<String>,
    pub detections: u64,
    #[serde(flatten)]
    pub card: ScoreCard,
}

impl SubsetScore {
    pub fn name(&self) -> String {
        self.members.join("+")
    }

    pub fn value(&self, metric: Metric) -> f64 {
        metric.value(&self.card, self.detections)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchStrategy {
    Exhaustive,
    GreedyReduction,
}

impl fmt::Display for SearchStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SearchStrategy::Exhaustive => "exhaustive",
            SearchStrategy::GreedyReduction => "greedy-reduction",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CombinationRanking {
    pub objective: Objective,
    pub search_strategy: SearchStrategy,
    /// Exhaustive: best first. Greedy: visited sets in visit order, so the
    /// last row is where the reduction stopped.
    pub rows: Vec<SubsetScore>,
    /// True for greedy results, which carry no optimality guarantee.
    pub heuristic: bool,
    /// Set after comparing a greedy result with the exhaustive optimum.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimal: Option<bool>,
}

impl CombinationRanking {
    /// The selected member set: top row, or the greedy endpoint.
    pub fn best(&self) -> &SubsetScore {
        match self.search_strategy {
            SearchStrategy::Exhaustive => &self.rows[0],
            SearchStrategy::GreedyReduction => self.rows.last().expect("greedy visits at least one set"),
        }
    }

    /// Marks a greedy result optimal or not against an exhaustive ranking
    /// for the same objective. Returns the flag.
    pub fn compare_with(&mut self, exhaustive: &CombinationRanking) -> bool {
        let metric = self.objective.metric;
        let optimal = self.best().value(metric) >= exhaustive.best().value(metric);
        self.optimal = Some(optimal);
        optimal
    }

    /// Aligned table: members, tp, fp, fn, recall, precision, f1,
    /// detections, type.
    pub fn to_text(&self, top: Option<usize>) -> String {
        let header = ["members", "tp", "fp", "fn", "recall", "precision", "f1", "detections", "type"];
        let best_index = match self.search_strategy {
            SearchStrategy::Exhaustive => 0,
            SearchStrategy::GreedyReduction => self.rows.len() - 1,
        };
        let label = match (self.search_strategy, self.optimal) {
            (SearchStrategy::Exhaustive, _) => self.objective.best_label().to_string(),
            (_, Some(false)) => format!("greedy endpoint ({}, not optimal)", self.objective.metric),
            (_, _) => format!("greedy endpoint ({})", self.objective.metric),
        };
        let limit = top.unwrap_or(usize::MAX);
        let body: Vec<[String; 9]> = self
            .rows
            .iter()
            .enumerate()
            .filter(|(i, _)| *i < limit || *i == best_index)
            .map(|(i, r)| {
                let c = &r.card.counts;
                [
                    r.name(),
                    c.tp.to_string(),
                    c.fp.to_string(),
                    c.fn_.to_string(),
                    fmt2(r.card.recall),
                    fmt2(r.card.precision),
                    fmt2(r.card.f1),
                    r.detections.to_string(),
                    if i == best_index { label.clone() } else { String::new() },
                ]
            })
            .collect();
        align(&header, &body)
    }
}

/// Everything a subset evaluation needs, with the reports classified once.
pub struct SearchInput<'a> {
    reports: BTreeMap<String, NormalizedReport>,
    manifest: &'a GroundTruthManifest,
    config: MatchConfig,
    policy: DedupPolicy,
}

impl<'a> SearchInput<'a> {
    pub fn new(
        reports: impl IntoIterator<Item = NormalizedReport>,
        manifest: &'a GroundTruthManifest,
        config: MatchConfig,
        policy: DedupPolicy,
    ) -> Result<Self> {
        config.validate()?;
        let mut map = BTreeMap::new();
        for mut r in reports {
            r.classify(&manifest.taxonomy);
            if map.insert(r.tool.name.clone(), r).is_some() {
                return Err(Error::InvalidConfig("two reports share one tool name".into()));
            }
        }
        Ok(SearchInput {
            reports: map,
            manifest,
            config,
            policy,
        })
    }

    pub fn tools(&self) -> Vec<String> {
        self.reports.keys().cloned().collect()
    }

    pub fn evaluate<S: AsRef<str>>(&self, members: &[S]) -> Result<SubsetScore> {
        let mut names: Vec<String> = members.iter().map(|m| m.as_ref().to_string()).collect();
        names.sort();
        names.dedup();
        if names.is_empty() {
            return Err(Error::InvalidConfig("empty member set".into()));
        }
        let reports = names
            .iter()
            .map(|n| self.reports.get(n).ok_or_else(|| Error::MissingMember(n.clone())))
            .collect::<Result<Vec<_>>>()?;
        let ensemble = merge(&reports, &self.policy)?;
        let result = match_report(&ensemble.merged_report, self.manifest, &self.config)?;
        Ok(SubsetScore {
            members: names,
            detections: result.detections,
            card: score(result.totals),
        })
    }
}

/// `score(match_report(merge(member reports)))`.
pub fn evaluate_subset<S: AsRef<str>>(
    members: &[S],
    reports: &[NormalizedReport],
    manifest: &GroundTruthManifest,
    config: &MatchConfig,
    policy: &DedupPolicy,
) -> Result<SubsetScore> {
    let wanted: BTreeSet<&str> = members.iter().map(AsRef::as_ref).collect();
    let picked = reports.iter().filter(|r| wanted.contains(r.tool.name.as_str())).cloned();
    SearchInput::new(picked, manifest, *config, policy.clone())?.evaluate(members)
}

/// Objective value descending, then fewer members, then member names.
pub fn rank(rows: &mut [SubsetScore], metric: Metric) {
    rows.sort_by(|a, b| {
        b.value(metric)
            .total_cmp(&a.value(metric))
            .then_with(|| a.members.len().cmp(&b.members.len()))
            .then_with(|| a.members.cmp(&b.members))
    });
}

/// Scores every non-empty subset of the input's tools.
pub fn evaluate_all_subsets(input: &SearchInput) -> Result<Vec<SubsetScore>> {
    let tools = input.tools();
    if tools.is_empty() {
        return Err(Error::InvalidConfig("no tools to combine".into()));
    }
    if tools.len() > MAX_EXHAUSTIVE_TOOLS {
        return Err(Error::TooManyTools(tools.len()));
    }
    (1u32..(1 << tools.len()))
        .into_par_iter()
        .map(|mask| {
            let members: Vec<&str> = tools
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, t)| t.as_str())
                .collect();
            input.evaluate(&members)
        })
        .collect()
}

pub fn search_exhaustive(input: &SearchInput, objective: Objective) -> Result<CombinationRanking> {
    let mut rows = evaluate_all_subsets(input)?;
    rank(&mut rows, objective.metric);
    Ok(CombinationRanking {
        objective,
        search_strategy: SearchStrategy::Exhaustive,
        rows,
        heuristic: false,
        optimal: Some(true),
    })
}

/// Starts from all tools and drops one member at a time, always the one
/// whose removal scores best (ties: smallest name), while that strictly
/// improves the objective.
pub fn search_greedy_reduction(input: &SearchInput, objective: Objective) -> Result<CombinationRanking> {
    let metric = objective.metric;
    let mut current = input.tools();
    if current.is_empty() {
        return Err(Error::InvalidConfig("no tools to combine".into()));
    }
    let mut here = input.evaluate(&current)?;
    let mut rows = vec![here.clone()];
    while current.len() > 1 {
        let candidates: Vec<(String, SubsetScore)> = current
            .par_iter()
            .map(|drop| {
                let rest: Vec<&str> = current.iter().filter(|t| *t != drop).map(String::as_str).collect();
                input.evaluate(&rest).map(|s| (drop.clone(), s))
            })
            .collect::<Result<_>>()?;
        let (dropped, next) = candidates
            .into_iter()
            .min_by(|(da, a), (db, b)| b.value(metric).total_cmp(&a.value(metric)).then_with(|| da.cmp(db)))
            .expect("at least two members");
        if next.value(metric) <= here.value(metric) {
            break;
        }
        current.retain(|t| *t != dropped);
        here = next;
        rows.push(here.clone());
    }
    Ok(CombinationRanking {
        objective,
        search_strategy: SearchStrategy::GreedyReduction,
        rows,
        heuristic: true,
        optimal: None,
    })
}

/// Best subset per metric from one exhaustive evaluation, in the order
/// f1, precision, recall, detections.
pub fn best_per_metric(rows: &[SubsetScore]) -> Vec<(Objective, SubsetScore)> {
    Metric::ALL
        .into_iter()
        .filter_map(|m| {
            let mut sorted = rows.to_vec();
            rank(&mut sorted, m);
            sorted.into_iter().next().map(|best| (Objective::maximize(m), best))
        })
        .collect()
}

/// Summary table with one row per objective.
pub fn best_per_metric_text(best: &[(Objective, SubsetScore)]) -> String {
    let header = ["members", "tp", "fp", "fn", "recall", "precision", "f1", "detections", "type"];
    let body: Vec<[String; 9]> = best
        .iter()
        .map(|(o, r)| {
            let c = &r.card.counts;
            [
                r.name(),
                c.tp.to_string(),
                c.fp.to_string(),
                c.fn_.to_string(),
                fmt2(r.card.recall),
                fmt2(r.card.precision),
                fmt2(r.card.f1),
                r.detections.to_string(),
                o.best_label().to_string(),
            ]
        })
        .collect();
    align(&header, &body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{FlawSite, GoodRegion, Language, TestCase};
    use crate::finding::{test_finding, CweId, SourceLocation};
    use crate::taxonomy::Taxonomy;
    use proptest::prelude::*;

    fn report(tool: &str, findings: Vec<Finding>) -> NormalizedReport {
        NormalizedReport::new(ToolId::new(tool, "1"), "/c", findings)
    }

    fn classified(tool: &str, file: &str, line: u32, cwe: u32) -> Finding {
        let mut f = test_finding(tool, file, line, Some(cwe));
        f.classify(&Taxonomy::default());
        f
    }

    #[test]
    fn merge_is_a_keyed_union() {
        let a = report("a", vec![classified("a", "x.c", 1, 89), classified("a", "x.c", 5, 89)]);
        let b = report("b", vec![classified("b", "x.c", 5, 564), classified("b", "y.c", 2, 476)]);
        let e = merge(&[&b, &a], &DedupPolicy::default()).unwrap();
        assert_eq!(e.merged_report.findings.len(), 3);
        assert_eq!(e.merged_report.tool.name, "a+b");
        let i = e.merged_report.findings.iter().position(|f| f.location.line == 5).unwrap();
        // representative from the alphabetically-first tool
        assert_eq!(e.merged_report.findings[i].tool.name, "a");
        assert_eq!(e.agreement(i), 2);
        assert_eq!(e.with_min_agreement(2).findings.len(), 1);
    }

    #[test]
    fn merge_identity_and_idempotence() {
        let a = report("a", vec![classified("a", "x.c", 1, 89), classified("a", "x.c", 1, 89)]);
        let once = merge(&[&a], &DedupPolicy::default()).unwrap();
        assert_eq!(once.merged_report.findings.len(), 1);
        assert_eq!(once.merged_report.tool, a.tool);
        let twice = merge(&[&once.merged_report], &DedupPolicy::default()).unwrap();
        assert_eq!(twice.merged_report.findings, once.merged_report.findings);
    }

    #[test]
    fn merge_rejects_mixed_targets() {
        let a = report("a", vec![]);
        let mut b = report("b", vec![]);
        b.target = "/other".into();
        assert!(matches!(merge(&[&a, &b], &DedupPolicy::default()), Err(Error::TargetMismatch { .. })));
        assert!(merge(&[], &DedupPolicy::default()).is_err());
    }

    /// `n` one-file Injection cases: flaw on line 10, good region on 20..=30.
    fn corpus(n: u32) -> GroundTruthManifest {
        let cases = (0..n)
            .map(|i| {
                let file = format!("c{i}.java");
                TestCase {
                    case_id: format!("CWE89_t_{i:02}"),
                    language: Language::Java,
                    target_class: "Injection".into(),
                    files: vec![file.clone()],
                    flaws: vec![FlawSite {
                        location: SourceLocation::new(&file, 10, Some(12)).unwrap(),
                        target_cwe: CweId::new(89).unwrap(),
                    }],
                    goods: vec![GoodRegion {
                        location: SourceLocation::new(&file, 20, Some(30)).unwrap(),
                        description: String::new(),
                    }],
                }
            })
            .collect();
        GroundTruthManifest::new("/c", "t", "1", Taxonomy::default(), cases)
    }

    fn tool(name: &str, flaws: &[u32], goods: &[u32]) -> NormalizedReport {
        let f = flaws.iter().map(|&i| test_finding(name, &format!("c{i}.java"), 10, Some(89)));
        let g = goods.iter().map(|&i| test_finding(name, &format!("c{i}.java"), 25, Some(89)));
        report(name, f.chain(g).collect())
    }

    #[test]
    fn pair_union_recall() {
        let m = corpus(10);
        let a = tool("a", &[0, 1, 2, 3, 4, 5], &[]);
        let b = tool("b", &[3, 4, 5, 6, 7, 8], &[]);
        let s = evaluate_subset(&["a", "b"], &[a.clone(), b], &m, &MatchConfig::default(), &DedupPolicy::default()).unwrap();
        assert_eq!((s.card.counts.tp, s.card.counts.fn_), (9, 1));
        assert_eq!(fmt2(s.card.recall), "0.90");
        let single = evaluate_subset(&["a"], &[a], &m, &MatchConfig::default(), &DedupPolicy::default()).unwrap();
        assert_eq!(single.card.counts.tp, 6);
        assert!(matches!(
            evaluate_subset(&["zz"], &[], &m, &MatchConfig::default(), &DedupPolicy::default()),
            Err(Error::MissingMember(_))
        ));
    }

    #[test]
    fn exhaustive_counts_and_order() {
        let m = corpus(10);
        let input = SearchInput::new(
            [tool("a", &[0, 1], &[0]), tool("b", &[2], &[]), tool("c", &[3], &[1, 2])],
            &m,
            MatchConfig::default(),
            DedupPolicy::default(),
        )
        .unwrap();
        let r = search_exhaustive(&input, Metric::Precision.into()).unwrap();
        assert_eq!(r.rows.len(), 7);
        assert_eq!(r.best().members, ["b"]);
        for w in r.rows.windows(2) {
            assert!(w[0].card.precision >= w[1].card.precision);
        }
    }

    #[test]
    fn too_many_tools() {
        let m = corpus(1);
        let reports = (0..17).map(|i| tool(&format!("t{i:02}"), &[], &[]));
        let input = SearchInput::new(reports, &m, MatchConfig::default(), DedupPolicy::default()).unwrap();
        assert!(matches!(search_exhaustive(&input, Metric::F1.into()), Err(Error::TooManyTools(17))));
        // greedy has no cap
        assert!(search_greedy_reduction(&input, Metric::F1.into()).is_ok());
    }

    #[test]
    fn greedy_drops_the_fp_only_member_first() {
        let m = corpus(10);
        let input = SearchInput::new(
            [tool("A", &[0, 1, 2, 3, 4], &[]), tool("B", &[3, 4, 5, 6, 7], &[0]), tool("C", &[], &[5, 6, 7])],
            &m,
            MatchConfig::default(),
            DedupPolicy::default(),
        )
        .unwrap();
        let g = search_greedy_reduction(&input, Metric::Precision.into()).unwrap();
        assert_eq!(g.rows[0].members, ["A", "B", "C"]);
        assert_eq!(g.rows[1].members, ["A", "B"]);
        assert!(g.heuristic);
    }

    #[test]
    fn greedy_single_tool() {
        let m = corpus(2);
        let input = SearchInput::new([tool("a", &[0], &[])], &m, MatchConfig::default(), DedupPolicy::default()).unwrap();
        let g = search_greedy_reduction(&input, Metric::F1.into()).unwrap();
        assert_eq!(g.rows.len(), 1);
        assert_eq!(g.best().members, ["a"]);
    }

    #[test]
    fn greedy_can_miss_the_optimum() {
        let m = corpus(10);
        let input = SearchInput::new(
            [tool("A", &[0, 2, 3, 7, 8, 9], &[1]), tool("B", &[4, 5, 6, 7, 9], &[8]), tool("C", &[], &[8])],
            &m,
            MatchConfig::default(),
            DedupPolicy::default(),
        )
        .unwrap();
        let objective = Metric::Precision.into();
        let mut g = search_greedy_reduction(&input, objective).unwrap();
        let e = search_exhaustive(&input, objective).unwrap();
        let path: Vec<String> = g.rows.iter().map(SubsetScore::name).collect();
        assert_eq!(path, ["A+B+C", "B+C"]);
        assert_eq!(e.best().members, ["A"]);
        assert!(!g.compare_with(&e));
        assert!(g.to_text(None).contains("not optimal"));
    }

    proptest! {
        #[test]
        fn union_bounds(fa in prop::collection::btree_set(0u32..8, 0..8), fb in prop::collection::btree_set(0u32..8, 0..8),
                        ga in prop::collection::btree_set(0u32..8, 0..4)) {
            let m = corpus(8);
            let fa: Vec<u32> = fa.into_iter().collect();
            let fb: Vec<u32> = fb.into_iter().collect();
            let ga: Vec<u32> = ga.into_iter().collect();
            let input = SearchInput::new([tool("a", &fa, &ga), tool("b", &fb, &[])], &m, MatchConfig::default(), DedupPolicy::default()).unwrap();
            let a = input.evaluate(&["a"]).unwrap().card.counts;
            let b = input.evaluate(&["b"]).unwrap().card.counts;
            let ab = input.evaluate(&["a", "b"]).unwrap().card.counts;
            prop_assert!(ab.tp <= a.tp + b.tp && ab.tp >= a.tp.max(b.tp));
            prop_assert!(ab.fp >= a.fp.max(b.fp));
            prop_assert!(ab.fn_ <= a.fn_.min(b.fn_));
        }
    }
}
