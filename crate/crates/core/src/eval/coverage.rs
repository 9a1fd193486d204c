use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{EvalError, PositiveSetConfig};
use crate::corpus::JudgmentSet;

/// Relevant documents checked for perfect coverage.
pub const PERFECT_COVERAGE_DOCS: usize = 10;

/// Per-variant rankings for one query. `priority` orders the relevant docs
/// (e.g. a dense ranking); when absent every relevant doc must be covered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoveragePools {
    pub query_id: String,
    pub variant_rankings: Vec<Vec<String>>,
    pub priority: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub k: usize,
    /// Mean fraction of relevant docs inside the pool, in [0, 1].
    pub avg_coverage: f64,
    /// Fraction of queries whose top-priority relevant docs are all in the pool.
    pub perfect_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
    pub n_queries: usize,
    pub skipped_no_positives: usize,
}

fn must_cover(relevant: &HashSet<String>, priority: Option<&[String]>) -> Vec<String> {
    match priority {
        Some(order) => {
            let mut out: Vec<String> = order
                .iter()
                .filter(|d| relevant.contains(*d))
                .take(PERFECT_COVERAGE_DOCS)
                .cloned()
                .collect();
            if out.len() < PERFECT_COVERAGE_DOCS {
                // relevant docs the priority list never mentions come last, by id
                let listed: HashSet<&String> = order.iter().collect();
                let mut rest: Vec<&String> = relevant.iter().filter(|d| !listed.contains(d)).collect();
                rest.sort();
                out.extend(rest.into_iter().take(PERFECT_COVERAGE_DOCS - out.len()).cloned());
            }
            out
        }
        None => relevant.iter().cloned().collect(),
    }
}

/// For each k, the pool is the union of every variant's top-k; coverage is
/// measured against the positive-labeled judgments of each query. Queries
/// without positives are skipped and counted.
pub fn coverage_analysis(
    pools: &[CoveragePools],
    judgments: &JudgmentSet,
    cfg: &PositiveSetConfig,
    ks: &[usize],
) -> Result<CoverageReport, EvalError> {
    if ks.windows(2).any(|w| w[0] > w[1]) {
        return Err(EvalError::InvalidArgument("ks must be ascending".into()));
    }
    let mut per_query = Vec::new();
    let mut skipped = 0;
    for p in pools {
        if !judgments.contains_query(&p.query_id) {
            return Err(EvalError::MissingJudgments(p.query_id.clone()));
        }
        let relevant = judgments.positives(&p.query_id, &cfg.positive_labels);
        if relevant.is_empty() {
            skipped += 1;
            continue;
        }
        let needed = must_cover(&relevant, p.priority.as_deref());
        per_query.push((p, relevant, needed));
    }
    let n = per_query.len();
    let rows = ks
        .iter()
        .map(|&k| {
            let mut cov_sum = 0.0;
            let mut perfect = 0usize;
            for (p, relevant, needed) in &per_query {
                let pool: HashSet<&str> = p
                    .variant_rankings
                    .iter()
                    .flat_map(|r| r.iter().take(k).map(String::as_str))
                    .collect();
                let found = relevant.iter().filter(|d| pool.contains(d.as_str())).count();
                cov_sum += found as f64 / relevant.len() as f64;
                if needed.iter().all(|d| pool.contains(d.as_str())) {
                    perfect += 1;
                }
            }
            let denom = n.max(1) as f64;
            CoverageRow {
                k,
                avg_coverage: cov_sum / denom,
                perfect_coverage: perfect as f64 / denom,
            }
        })
        .collect();
    Ok(CoverageReport {
        rows,
        n_queries: n,
        skipped_no_positives: skipped,
    })
}
