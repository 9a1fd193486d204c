use std::collections::{HashMap, HashSet};

use super::{BackendError, CandidateText, ChunkPick, RerankError, ScorerBackend, MAX_CHUNK};
use crate::hintgen::{render, TemplateName, TextProvider};
use crate::hints::{parse_literal, HintSet, LiteralValue};

/// Validates a reply to the chunk-ranking prompt for one chunk.
#[derive(Debug, Clone)]
pub struct ChunkReplyParser {
    ids: HashSet<String>,
    expected: usize,
}

impl ChunkReplyParser {
    pub fn expected(&self) -> usize {
        self.expected
    }

    /// Reads the braced id-to-score map after any `</think>` section. Picks
    /// come back in descending score order, ties by id.
    pub fn parse(&self, reply: &str) -> Result<Vec<ChunkPick>, RerankError> {
        let body = reply
            .rfind("</think>")
            .map_or(reply, |i| &reply[i + "</think>".len()..]);
        let (Some(i), Some(j)) = (body.find('{'), body.rfind('}')) else {
            return Err(RerankError::ParseFailed("no braced map in reply".into()));
        };
        if j < i {
            return Err(RerankError::ParseFailed("no braced map in reply".into()));
        }
        let value = parse_literal(&body[i..=j]).map_err(|e| RerankError::ParseFailed(e.to_string()))?;
        let LiteralValue::Map(entries) = value else {
            return Err(RerankError::ParseFailed("reply is not a map".into()));
        };
        let picks = entries
            .into_iter()
            .map(|(id, v)| {
                let score = v
                    .as_int()
                    .ok_or_else(|| RerankError::ProtocolViolation(format!("score for {id:?} is not an integer")))?;
                if !(0..=100).contains(&score) {
                    return Err(RerankError::ProtocolViolation(format!(
                        "score {score} for {id:?} outside 0-100"
                    )));
                }
                Ok(ChunkPick {
                    doc_id: id,
                    score: score as u8,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut picks = validate_picks(&self.ids, self.expected, picks)?;
        picks.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
        Ok(picks)
    }
}

/// Count, membership and distinctness checks shared by every chunk reply.
pub(crate) fn validate_picks(
    ids: &HashSet<String>,
    expected: usize,
    picks: Vec<ChunkPick>,
) -> Result<Vec<ChunkPick>, RerankError> {
    if picks.len() != expected {
        return Err(RerankError::ProtocolViolation(format!(
            "expected {expected} picks, got {}",
            picks.len()
        )));
    }
    let mut seen = HashSet::new();
    for p in &picks {
        if !ids.contains(&p.doc_id) {
            return Err(RerankError::ProtocolViolation(format!(
                "{:?} is not in the chunk",
                p.doc_id
            )));
        }
        if !seen.insert(&p.doc_id) {
            return Err(RerankError::ProtocolViolation(format!("{:?} picked twice", p.doc_id)));
        }
        if p.score > 100 {
            return Err(RerankError::ProtocolViolation(format!(
                "score {} outside 0-100",
                p.score
            )));
        }
    }
    Ok(picks)
}

/// Renders the chunk-ranking prompt with one `id: text` line per product.
pub fn chunk_prompt_roundtrip(query: &str, chunk: &[CandidateText]) -> Result<(String, ChunkReplyParser), RerankError> {
    if chunk.is_empty() || chunk.len() > MAX_CHUNK {
        return Err(RerankError::InvalidArgument(format!(
            "chunk size must be 1-{MAX_CHUNK}, got {}",
            chunk.len()
        )));
    }
    let lines: Vec<String> = chunk.iter().map(|c| format!("{}: {}", c.doc_id, c.text)).collect();
    let bindings: HashMap<&str, String> = [("query", query.to_string()), ("products", lines.join("\n"))]
        .into_iter()
        .collect();
    let prompt =
        render(TemplateName::ChunkRanking, &bindings).map_err(|e| RerankError::InvalidArgument(e.to_string()))?;
    let parser = ChunkReplyParser {
        ids: chunk.iter().map(|c| c.doc_id.clone()).collect(),
        expected: chunk.len().min(2),
    };
    Ok((prompt, parser))
}

/// Listwise backend that prompts a text provider with the chunk template.
pub struct PromptChunkBackend<P> {
    provider: P,
}

impl<P: TextProvider> PromptChunkBackend<P> {
    pub fn new(provider: P) -> Self {
        Self { provider }
    }
}

impl<P: TextProvider> ScorerBackend for PromptChunkBackend<P> {
    fn score_pairs(&self, _: &str, _: Option<&HintSet>, _: &[CandidateText]) -> Result<Vec<f64>, BackendError> {
        Err(BackendError::Unsupported("pointwise scoring"))
    }

    fn rank_chunk(&self, query: &str, products: &[CandidateText]) -> Result<Vec<ChunkPick>, BackendError> {
        let (prompt, parser) =
            chunk_prompt_roundtrip(query, products).map_err(|e| BackendError::BadResponse(e.to_string()))?;
        let reply = self.provider.complete(&prompt)?;
        parser
            .parse(&reply)
            .map_err(|e| BackendError::BadResponse(e.to_string()))
    }
}
