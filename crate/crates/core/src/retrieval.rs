//! First-stage retrieval: BM25, query-enhanced BM25 and dense cosine.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingStore, SuperlativeQuery};
use crate::hints::{top_brands, HintSet};
use crate::index::{bm25_topk, dense_topk, rank_order, tokenize, IndexError, InvertedIndex, ScoredDoc};

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("hint set has no coverage queries")]
    EmptyHints,
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error("malformed run file at line {line}: {reason}")]
    MalformedRun { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = RetrievalError> = std::result::Result<T, E>;

/// Ranked candidates for one query: descending score, ties by ascending doc
/// id, no repeated ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<ScoredDoc>,
}

impl RankedList {
    /// Sorts the entries and drops repeated ids, keeping the best-ranked copy.
    pub fn new(query_id: impl Into<String>, mut entries: Vec<ScoredDoc>) -> Self {
        entries.sort_by(rank_order);
        let mut seen = HashSet::new();
        entries.retain(|e| seen.insert(e.doc_id.clone()));
        Self {
            query_id: query_id.into(),
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.doc_id.as_str()).collect()
    }

    pub fn truncate(&mut self, k: usize) {
        self.entries.truncate(k);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct QEConfig {
    pub k: usize,
    pub max_candidates: usize,
    pub include_brand_variants: bool,
}

impl Default for QEConfig {
    fn default() -> Self {
        Self {
            k: 50,
            max_candidates: 50_000,
            include_brand_variants: true,
        }
    }
}

impl QEConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.max_candidates {
            return Err(RetrievalError::InvalidConfig(format!(
                "need 1 <= k <= max_candidates, got k={} max_candidates={}",
                self.k, self.max_candidates
            )));
        }
        Ok(())
    }
}

pub fn retrieve_bm25(index: &InvertedIndex, q: &SuperlativeQuery, k: usize) -> Result<RankedList> {
    let hits = bm25_topk(index, &tokenize(&q.text), k, k)?;
    Ok(RankedList {
        query_id: q.id.clone(),
        entries: hits,
    })
}

/// Coverage queries in order, then `"<brand> <query>"` for each top-3 brand
/// when enabled. Repeats are dropped, keeping the first.
pub fn build_variants(q: &SuperlativeQuery, h: &HintSet, cfg: &QEConfig) -> Result<Vec<String>> {
    if h.coverage_queries.is_empty() {
        return Err(RetrievalError::EmptyHints);
    }
    let mut out: Vec<String> = Vec::new();
    let mut seen = HashSet::new();
    let brand_variants = top_brands(h)
        .into_iter()
        .filter(|_| cfg.include_brand_variants)
        .map(|b| format!("{} {}", b.name, q.text));
    for v in h.coverage_queries.iter().cloned().chain(brand_variants) {
        if seen.insert(v.clone()) {
            out.push(v);
        }
    }
    Ok(out)
}

/// Query-enhanced BM25. Each variant keeps its top `max_candidates` BM25 hits;
/// every doc retained by some variant gets the mean of its scores over all
/// variants, with 0 wherever a variant did not retain it. Variants without
/// tokens still count in the mean.
pub fn retrieve_qe_bm25(
    index: &InvertedIndex,
    query_id: &str,
    variants: &[String],
    cfg: &QEConfig,
) -> Result<RankedList> {
    cfg.validate()?;
    if variants.is_empty() {
        return Err(RetrievalError::InvalidConfig("no query variants".into()));
    }
    let tokens: Vec<Vec<String>> = variants.iter().map(|v| tokenize(v)).collect();
    if tokens.iter().all(Vec::is_empty) {
        return Err(IndexError::EmptyQuery.into());
    }
    let per_variant: Vec<Vec<(u32, f64)>> = tokens
        .par_iter()
        .map(|t| index.top_hits(t, cfg.max_candidates))
        .collect();

    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); index.doc_count()];
    for hits in &per_variant {
        for &(d, s) in hits {
            if s > 0.0 {
                rows[d as usize].push(s);
            }
        }
    }
    let n = variants.len() as f64;
    let mut scored: Vec<(u32, f64)> = rows
        .into_iter()
        .enumerate()
        .filter(|(_, r)| !r.is_empty())
        .map(|(d, mut r)| {
            // summing in sorted order makes the mean independent of variant order
            r.sort_by(f64::total_cmp);
            (d as u32, r.iter().sum::<f64>() / n)
        })
        .collect();
    crate::index::top_n(&mut scored, cfg.k);
    Ok(RankedList {
        query_id: query_id.to_string(),
        entries: scored
            .into_iter()
            .map(|(d, s)| ScoredDoc::new(index.doc_id(d), s))
            .collect(),
    })
}

pub fn retrieve_dense(store: &EmbeddingStore, query_id: &str, query_vec: &[f64], k: usize) -> Result<RankedList> {
    Ok(RankedList {
        query_id: query_id.to_string(),
        entries: dense_topk(store, query_vec, k)?,
    })
}

/// Drops queries with no BM25 hit in the index.
pub fn retain_retrievable(index: &InvertedIndex, queries: Vec<SuperlativeQuery>) -> Vec<SuperlativeQuery> {
    queries
        .into_iter()
        .filter(|q| tokenize(&q.text).iter().any(|t| index.doc_freq(t) > 0))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct RunRecord {
    query_id: String,
    doc_ids: Vec<String>,
    scores: Vec<f64>,
}

pub fn write_run<W: Write>(lists: &[RankedList], mut out: W) -> Result<()> {
    for l in lists {
        let rec = RunRecord {
            query_id: l.query_id.clone(),
            doc_ids: l.entries.iter().map(|e| e.doc_id.clone()).collect(),
            scores: l.entries.iter().map(|e| e.score).collect(),
        };
        serde_json::to_writer(&mut out, &rec).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_run(lists: &[RankedList], path: impl AsRef<Path>) -> Result<()> {
    write_run(lists, BufWriter::new(File::create(path)?))
}

/// Reads a run file. Entry order is kept as written.
pub fn read_run<R: BufRead>(reader: R) -> Result<Vec<RankedList>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| RetrievalError::MalformedRun { line: i + 1, reason };
        let rec: RunRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if rec.doc_ids.len() != rec.scores.len() {
            return Err(bad(format!(
                "{} doc_ids but {} scores",
                rec.doc_ids.len(),
                rec.scores.len()
            )));
        }
        if !seen.insert(rec.query_id.clone()) {
            return Err(bad(format!("query {:?} appears twice", rec.query_id)));
        }
        let mut ids = HashSet::new();
        if let Some(d) = rec.doc_ids.iter().find(|d| !ids.insert(*d)) {
            return Err(bad(format!("doc {d:?} repeated")));
        }
        out.push(RankedList {
            query_id: rec.query_id,
            entries: rec
                .doc_ids
                .into_iter()
                .zip(rec.scores)
                .map(|(d, s)| ScoredDoc::new(d, s))
                .collect(),
        });
    }
    Ok(out)
}

pub fn load_run(path: impl AsRef<Path>) -> Result<Vec<RankedList>> {
    read_run(BufReader::new(File::open(path)?))
}
