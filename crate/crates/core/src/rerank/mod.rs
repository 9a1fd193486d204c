//! Second-stage ranking over a first-stage candidate list.

mod chunk_prompt;
mod http;
mod lexical;

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use chunk_prompt::{chunk_prompt_roundtrip, ChunkReplyParser, PromptChunkBackend};
pub use http::HttpScorer;
pub use lexical::{contains_phrase, lexical_score, LexicalScorer, LexicalScorerConfig};

use crate::corpus::{Product, ProductStore, SuperlativeQuery};
use crate::hintgen::ProviderError;
use crate::hints::{enrich_query, plain_query_repr, pointwise_query_repr, EnrichError, EnrichOptions, HintSet};
use crate::index::ScoredDoc;
use crate::retrieval::RankedList;

pub const MAX_CHUNK: usize = 10;
pub const MAX_LISTWISE: usize = 50;
pub const PICKS_PER_CHUNK: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateText {
    pub doc_id: String,
    pub text: String,
}

impl CandidateText {
    pub fn from_product(p: &Product) -> Self {
        Self {
            doc_id: p.id.clone(),
            text: p.text(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPick {
    pub doc_id: String,
    pub score: u8,
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("scorer returned HTTP {0}")]
    Status(u16),
    #[error("bad scorer response: {0}")]
    BadResponse(String),
    #[error("scorer protocol violation: {0}")]
    Protocol(String),
    #[error("backend does not support {0}")]
    Unsupported(&'static str),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// A pointwise scorer plus a chunk ranker.
///
/// `score_pairs` returns one real score per product, higher is better.
/// `rank_chunk` returns `min(2, n)` distinct picks from the chunk with integer
/// scores in 0-100, descending.
pub trait ScorerBackend: Send + Sync {
    fn score_pairs(
        &self,
        query_repr: &str,
        hints: Option<&HintSet>,
        products: &[CandidateText],
    ) -> Result<Vec<f64>, BackendError>;

    fn rank_chunk(&self, query: &str, products: &[CandidateText]) -> Result<Vec<ChunkPick>, BackendError>;

    /// Upper bound on concurrent requests, if the backend has one.
    fn max_concurrency(&self) -> Option<usize> {
        None
    }
}

impl<B: ScorerBackend + ?Sized> ScorerBackend for std::sync::Arc<B> {
    fn score_pairs(&self, q: &str, h: Option<&HintSet>, p: &[CandidateText]) -> Result<Vec<f64>, BackendError> {
        (**self).score_pairs(q, h, p)
    }
    fn rank_chunk(&self, q: &str, p: &[CandidateText]) -> Result<Vec<ChunkPick>, BackendError> {
        (**self).rank_chunk(q, p)
    }
    fn max_concurrency(&self) -> Option<usize> {
        (**self).max_concurrency()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RerankError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("backend returned {got} scores for {expected} candidates")]
    LengthMismatch { expected: usize, got: usize },
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("could not parse chunk reply: {0}")]
    ParseFailed(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("candidate {0:?} is not in the product store")]
    UnknownProduct(String),
    #[error(transparent)]
    Enrich(#[from] EnrichError),
}

pub type Result<T, E = RerankError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkStrategy {
    /// Chunk i holds candidates 10i..10i+9 in retrieval order.
    #[default]
    Contiguous,
    /// Candidate j goes to chunk j mod ceil(n/10).
    Strided,
}

fn candidate_texts(candidates: &RankedList, products: &ProductStore) -> Result<Vec<CandidateText>> {
    candidates
        .entries
        .iter()
        .map(|e| {
            products
                .get(&e.doc_id)
                .map(CandidateText::from_product)
                .ok_or_else(|| RerankError::UnknownProduct(e.doc_id.clone()))
        })
        .collect()
}

/// The query half of the pointwise input: enriched with brands when hints are
/// given, the bare query otherwise.
pub fn pointwise_repr(q: &SuperlativeQuery, hints: Option<&HintSet>, opts: EnrichOptions) -> Result<String> {
    Ok(match hints {
        Some(h) => pointwise_query_repr(&enrich_query(q, h, opts)?, h),
        None => plain_query_repr(q),
    })
}

/// Scores every candidate independently and sorts by score, ties by doc id.
pub fn pointwise_rerank(
    q: &SuperlativeQuery,
    hints: Option<&HintSet>,
    candidates: &RankedList,
    products: &ProductStore,
    backend: &dyn ScorerBackend,
    opts: EnrichOptions,
) -> Result<RankedList> {
    if candidates.is_empty() {
        return Err(RerankError::InvalidArgument("no candidates to rerank".into()));
    }
    let texts = candidate_texts(candidates, products)?;
    let repr = pointwise_repr(q, hints, opts)?;
    let scores = backend.score_pairs(&repr, hints, &texts)?;
    if scores.len() != texts.len() {
        return Err(RerankError::LengthMismatch {
            expected: texts.len(),
            got: scores.len(),
        });
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(RerankError::ProtocolViolation(format!("non-finite score {s}")));
    }
    Ok(RankedList::new(
        candidates.query_id.clone(),
        texts
            .into_iter()
            .zip(scores)
            .map(|(t, s)| ScoredDoc::new(t.doc_id, s))
            .collect(),
    ))
}

/// Splits positions `0..n` into `ceil(n/10)` chunks.
pub fn chunk_positions(n: usize, strategy: ChunkStrategy) -> Vec<Vec<usize>> {
    let chunks = n.div_ceil(MAX_CHUNK);
    match strategy {
        ChunkStrategy::Contiguous => (0..chunks)
            .map(|c| (c * MAX_CHUNK..((c + 1) * MAX_CHUNK).min(n)).collect())
            .collect(),
        ChunkStrategy::Strided => (0..chunks).map(|c| (c..n).step_by(chunks).collect()).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ListwiseOutcome {
    /// Finalists first, then the rest in retrieval order. Scores are
    /// `n - position`, so they only encode the order.
    pub ranked: RankedList,
    /// Merged finalists with their chunk scores.
    pub finalists: Vec<ChunkPick>,
    pub chunks: usize,
}

/// Chunked listwise rerank of up to 50 candidates: top-2 per chunk of 10,
/// finalists merged by chunk score (ties by doc id) ahead of everything else.
pub fn listwise_rerank(
    q: &SuperlativeQuery,
    candidates: &RankedList,
    products: &ProductStore,
    backend: &dyn ScorerBackend,
    strategy: ChunkStrategy,
) -> Result<ListwiseOutcome> {
    let n = candidates.len();
    if n == 0 || n > MAX_LISTWISE {
        return Err(RerankError::InvalidArgument(format!(
            "listwise rerank takes 1-{MAX_LISTWISE} candidates, got {n}"
        )));
    }
    let texts = candidate_texts(candidates, products)?;
    let chunks: Vec<Vec<CandidateText>> = chunk_positions(n, strategy)
        .into_iter()
        .map(|pos| pos.into_iter().map(|i| texts[i].clone()).collect())
        .collect();
    let run = |chunk: &Vec<CandidateText>| -> Result<Vec<ChunkPick>> {
        let picks = backend.rank_chunk(&q.text, chunk)?;
        let ids: HashSet<String> = chunk.iter().map(|c| c.doc_id.clone()).collect();
        let picks = chunk_prompt::validate_picks(&ids, chunk.len().min(PICKS_PER_CHUNK), picks)?;
        if picks.windows(2).any(|w| w[0].score < w[1].score) {
            return Err(RerankError::ProtocolViolation(
                "chunk picks not in descending order".into(),
            ));
        }
        Ok(picks)
    };
    let per_chunk: Vec<Vec<ChunkPick>> = if backend.max_concurrency() == Some(1) {
        chunks.iter().map(run).collect::<Result<_>>()?
    } else {
        chunks.par_iter().map(run).collect::<Result<_>>()?
    };

    let mut finalists: Vec<ChunkPick> = per_chunk.into_iter().flatten().collect();
    finalists.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
    let chosen: HashSet<&str> = finalists.iter().map(|p| p.doc_id.as_str()).collect();
    let order: Vec<&str> = finalists
        .iter()
        .map(|p| p.doc_id.as_str())
        .chain(
            candidates
                .entries
                .iter()
                .map(|e| e.doc_id.as_str())
                .filter(|id| !chosen.contains(id)),
        )
        .collect();
    let entries = order
        .iter()
        .enumerate()
        .map(|(i, id)| ScoredDoc::new(*id, (n - i) as f64))
        .collect();
    Ok(ListwiseOutcome {
        ranked: RankedList {
            query_id: candidates.query_id.clone(),
            entries,
        },
        finalists,
        chunks: chunks.len(),
    })
}
