//! Ranking metrics, grouped breakdowns, candidate coverage and latency statistics.

mod coverage;
mod latency;
mod metrics;
mod report;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use coverage::{coverage_analysis, CoveragePools, CoverageReport, CoverageRow, PERFECT_COVERAGE_DOCS};
pub use latency::{
    latency_stats, percentile_nearest_rank, sample_stats, LatencySample, LatencyStats, STAGE_HINTS, STAGE_RERANK,
    STAGE_RETRIEVE,
};
pub use metrics::{average_precision, mean_average_precision, mrr, precision_at_k, reciprocal_rank};
pub use report::{
    format_breakdown_columns, format_breakdown_table, format_coverage_table, format_latency_table,
    format_metric_columns, format_metric_table, MetricColumn,
};

use crate::corpus::{JudgmentSet, Label, SuperlativeQuery};
use crate::retrieval::RankedList;

pub const P_AT_KS: [usize; 4] = [1, 3, 5, 10];
pub const DEFAULT_DEPTH: usize = 50;
/// Groups with fewer queries are flagged and left out of default tables.
pub const MIN_GROUP_QUERIES: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no judgments for query {0:?}")]
    MissingJudgments(String),
    #[error("no query has a positive judgment")]
    NoScorableQueries,
    #[error("cannot resolve grouping key for query {0:?}")]
    UnknownKey(String),
    #[error("no latency samples")]
    EmptySamples,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// Which labels count as positive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositiveSetConfig {
    pub positive_labels: BTreeSet<Label>,
}

impl Default for PositiveSetConfig {
    fn default() -> Self {
        Self {
            positive_labels: [Label::RelevantAndBest].into_iter().collect(),
        }
    }
}

impl FromStr for PositiveSetConfig {
    type Err = EvalError;

    /// Comma-separated short names: `rb`, `rnb`, `irr`.
    fn from_str(s: &str) -> Result<Self> {
        let mut labels = BTreeSet::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            labels.insert(match part {
                "rb" => Label::RelevantAndBest,
                "rnb" => Label::RelevantNotBest,
                "irr" => Label::Irrelevant,
                other => {
                    return Err(EvalError::InvalidArgument(format!(
                        "unknown positive label {other:?} (use rb, rnb, irr)"
                    )))
                }
            });
        }
        if labels.is_empty() {
            return Err(EvalError::InvalidArgument("positive set is empty".into()));
        }
        Ok(Self {
            positive_labels: labels,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub p_at: BTreeMap<usize, f64>,
    pub map_score: f64,
    pub mrr: f64,
    /// Queries that entered the averages.
    pub n_queries: usize,
    /// Run queries left out because they have no positive judgment.
    pub skipped_no_positives: usize,
}

impl MetricReport {
    pub fn p(&self, k: usize) -> f64 {
        self.p_at.get(&k).copied().unwrap_or(0.0)
    }
}

struct QueryMetrics {
    p_at: [f64; 4],
    ap: f64,
    rr: f64,
}

fn query_metrics(ranking: &[&str], positives: &HashSet<String>) -> QueryMetrics {
    QueryMetrics {
        p_at: P_AT_KS.map(|k| precision_at_k(ranking, positives, k)),
        ap: average_precision(ranking, positives),
        rr: reciprocal_rank(ranking, positives),
    }
}

fn aggregate(rows: &[&QueryMetrics], skipped: usize) -> Result<MetricReport> {
    if rows.is_empty() {
        return Err(EvalError::NoScorableQueries);
    }
    let n = rows.len() as f64;
    let mean = |f: &dyn Fn(&QueryMetrics) -> f64| rows.iter().map(|m| f(m)).sum::<f64>() / n;
    Ok(MetricReport {
        p_at: P_AT_KS
            .iter()
            .enumerate()
            .map(|(i, &k)| (k, mean(&|m| m.p_at[i])))
            .collect(),
        map_score: mean(&|m| m.ap),
        mrr: mean(&|m| m.rr),
        n_queries: rows.len(),
        skipped_no_positives: skipped,
    })
}

/// Per-query metrics in run order; `None` marks a query without positives.
fn score_run(
    run: &[RankedList],
    judgments: &JudgmentSet,
    cfg: &PositiveSetConfig,
    depth: usize,
) -> Result<Vec<Option<QueryMetrics>>> {
    if depth == 0 {
        return Err(EvalError::InvalidArgument("depth must be at least 1".into()));
    }
    run.iter()
        .map(|list| {
            if !judgments.contains_query(&list.query_id) {
                return Err(EvalError::MissingJudgments(list.query_id.clone()));
            }
            let positives = judgments.positives(&list.query_id, &cfg.positive_labels);
            if positives.is_empty() {
                return Ok(None);
            }
            let ranking: Vec<&str> = list.entries.iter().take(depth).map(|e| e.doc_id.as_str()).collect();
            Ok(Some(query_metrics(&ranking, &positives)))
        })
        .collect()
}

/// Metrics over the run truncated at `depth`. Unjudged docs are non-positive;
/// queries without positives are skipped and counted.
pub fn evaluate_run(
    run: &[RankedList],
    judgments: &JudgmentSet,
    cfg: &PositiveSetConfig,
    depth: usize,
) -> Result<MetricReport> {
    let per_query = score_run(run, judgments, cfg, depth)?;
    let scored: Vec<&QueryMetrics> = per_query.iter().flatten().collect();
    aggregate(&scored, per_query.len() - scored.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    ParentCategory,
    /// Number of positive-labeled judgments for the query.
    NRelevant,
}

impl FromStr for GroupKey {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parent_category" => Ok(GroupKey::ParentCategory),
            "n_relevant" => Ok(GroupKey::NRelevant),
            other => Err(EvalError::InvalidArgument(format!("unknown group key {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group: String,
    pub n_pairs: usize,
    pub report: MetricReport,
    /// Fewer than [`MIN_GROUP_QUERIES`] scored queries.
    pub flagged: bool,
}

/// One report per group, ordered by group name (numerically for
/// `n_relevant`). Groups are formed from scored queries only.
pub fn breakdown_by(
    run: &[RankedList],
    judgments: &JudgmentSet,
    queries: &[SuperlativeQuery],
    key: GroupKey,
    cfg: &PositiveSetConfig,
    depth: usize,
) -> Result<Vec<GroupReport>> {
    let by_id: HashMap<&str, &SuperlativeQuery> = queries.iter().map(|q| (q.id.as_str(), q)).collect();
    let per_query = score_run(run, judgments, cfg, depth)?;
    let mut groups: BTreeMap<(usize, String), (Vec<&QueryMetrics>, usize, usize)> = BTreeMap::new();
    for (list, m) in run.iter().zip(&per_query) {
        let group = match key {
            GroupKey::ParentCategory => {
                let q = by_id
                    .get(list.query_id.as_str())
                    .ok_or_else(|| EvalError::UnknownKey(list.query_id.clone()))?;
                (0, q.parent_category.clone())
            }
            GroupKey::NRelevant => {
                let n = judgments.positives(&list.query_id, &cfg.positive_labels).len();
                (n, n.to_string())
            }
        };
        let entry = groups.entry(group).or_default();
        match m {
            Some(m) => entry.0.push(m),
            None => entry.2 += 1,
        }
        entry.1 += judgments.pair_count(&list.query_id);
    }
    groups
        .into_iter()
        .filter(|(_, (rows, _, _))| !rows.is_empty())
        .map(|((_, name), (rows, pairs, skipped))| {
            let report = aggregate(&rows, skipped)?;
            Ok(GroupReport {
                group: name,
                n_pairs: pairs,
                flagged: report.n_queries < MIN_GROUP_QUERIES,
                report,
            })
        })
        .collect()
}
