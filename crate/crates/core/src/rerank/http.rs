use std::collections::HashSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{BackendError, CandidateText, ChunkPick, RerankError, ScorerBackend, PICKS_PER_CHUNK};
use crate::hints::HintSet;

#[derive(Serialize)]
struct WireProduct<'a> {
    id: &'a str,
    text: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    query: &'a str,
    products: Vec<WireProduct<'a>>,
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

#[derive(Deserialize)]
struct WirePick {
    id: String,
    score: i64,
}

#[derive(Deserialize)]
struct RankChunkResponse {
    top: Vec<WirePick>,
}

/// Client for a scoring service speaking `/v1/score`, `/v1/rank_chunk` and
/// `/v1/health`. Hints are not sent; the query text is expected to carry them.
pub struct HttpScorer {
    agent: ureq::Agent,
    base: String,
    max_concurrency: Option<usize>,
}

impl HttpScorer {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(true)
            .build()
            .into();
        Self {
            agent,
            base: base_url.trim_end_matches('/').to_string(),
            max_concurrency: None,
        }
    }

    pub fn with_max_concurrency(mut self, limit: usize) -> Self {
        self.max_concurrency = Some(limit.max(1));
        self
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn post(&self, path: &str, query: &str, products: &[CandidateText]) -> Result<Value, BackendError> {
        let body = WireRequest {
            query,
            products: products
                .iter()
                .map(|p| WireProduct {
                    id: &p.doc_id,
                    text: &p.text,
                })
                .collect(),
        };
        let mut resp = self.agent.post(&self.url(path)).send_json(&body).map_err(wire_error)?;
        resp.body_mut()
            .read_json()
            .map_err(|e| BackendError::BadResponse(e.to_string()))
    }

    pub fn health(&self) -> Result<(), BackendError> {
        let mut resp = self.agent.get(&self.url("/v1/health")).call().map_err(wire_error)?;
        let v: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::BadResponse(e.to_string()))?;
        match v.get("status").and_then(Value::as_str) {
            Some("ok") => Ok(()),
            other => Err(BackendError::BadResponse(format!("health status {other:?}"))),
        }
    }
}

fn wire_error(e: ureq::Error) -> BackendError {
    match e {
        ureq::Error::StatusCode(code) => BackendError::Status(code),
        other => BackendError::Transport(other.to_string()),
    }
}

impl ScorerBackend for HttpScorer {
    fn score_pairs(
        &self,
        query_repr: &str,
        _hints: Option<&HintSet>,
        products: &[CandidateText],
    ) -> Result<Vec<f64>, BackendError> {
        let v = self.post("/v1/score", query_repr, products)?;
        let resp: ScoreResponse = serde_json::from_value(v).map_err(|e| BackendError::BadResponse(e.to_string()))?;
        if resp.scores.len() != products.len() {
            return Err(BackendError::Protocol(format!(
                "sent {} products, got {} scores",
                products.len(),
                resp.scores.len()
            )));
        }
        if let Some(s) = resp.scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(BackendError::Protocol(format!("score {s} outside [0, 1]")));
        }
        Ok(resp.scores)
    }

    fn rank_chunk(&self, query: &str, products: &[CandidateText]) -> Result<Vec<ChunkPick>, BackendError> {
        let v = self.post("/v1/rank_chunk", query, products)?;
        let resp: RankChunkResponse =
            serde_json::from_value(v).map_err(|e| BackendError::BadResponse(e.to_string()))?;
        let mut out = Vec::with_capacity(resp.top.len());
        for (i, p) in resp.top.into_iter().enumerate() {
            if !(0..=100).contains(&p.score) {
                return Err(BackendError::Protocol(format!("score {} outside 0-100", p.score)));
            }
            let score = p.score as u8;
            if i > 0 && out.last().is_some_and(|prev: &ChunkPick| prev.score < score) {
                return Err(BackendError::Protocol("top entries are not in descending order".into()));
            }
            out.push(ChunkPick { doc_id: p.id, score });
        }
        let ids: HashSet<String> = products.iter().map(|p| p.doc_id.clone()).collect();
        super::chunk_prompt::validate_picks(&ids, products.len().min(PICKS_PER_CHUNK), out).map_err(|e| match e {
            RerankError::ProtocolViolation(m) => BackendError::Protocol(m),
            other => BackendError::Protocol(other.to_string()),
        })
    }

    fn max_concurrency(&self) -> Option<usize> {
        self.max_concurrency
    }
}
