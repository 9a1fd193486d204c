use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{BackendError, CandidateText, ChunkPick, ScorerBackend};
use crate::hints::{top_brands, HintSet};
use crate::index::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LexicalScorerConfig {
    /// Added per importance point of each matched feature.
    pub feature_weight_scale: f64,
    /// Added once when any top-3 brand appears in the product.
    pub brand_bonus: f64,
}

impl Default for LexicalScorerConfig {
    fn default() -> Self {
        Self {
            feature_weight_scale: 0.1,
            brand_bonus: 1.0,
        }
    }
}

impl LexicalScorerConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("feature_weight_scale", self.feature_weight_scale),
            ("brand_bonus", self.brand_bonus),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        Ok(())
    }
}

/// True when the tokens of `phrase` occur as a contiguous run in `tokens`.
/// A phrase without tokens never matches.
pub fn contains_phrase(tokens: &[String], phrase: &str) -> bool {
    let p = tokenize(phrase);
    !p.is_empty() && tokens.windows(p.len()).any(|w| w == p.as_slice())
}

/// Distinct-token overlap of the query with the product, plus hint bonuses:
/// `importance * feature_weight_scale` for each feature whose name or any
/// synonym occurs in the product, and `brand_bonus` if a top-3 brand does.
pub fn lexical_score(query_repr: &str, hints: Option<&HintSet>, product_text: &str, cfg: &LexicalScorerConfig) -> f64 {
    let product = tokenize(product_text);
    let q: HashSet<String> = tokenize(query_repr).into_iter().collect();
    let mut score = if q.is_empty() {
        0.0
    } else {
        let p: HashSet<&String> = product.iter().collect();
        q.iter().filter(|t| p.contains(t)).count() as f64 / q.len() as f64
    };
    if let Some(h) = hints {
        for f in &h.features {
            if contains_phrase(&product, &f.name) || f.synonyms.iter().any(|s| contains_phrase(&product, s)) {
                score += f.importance as f64 * cfg.feature_weight_scale;
            }
        }
        if top_brands(h).iter().any(|b| contains_phrase(&product, &b.name)) {
            score += cfg.brand_bonus;
        }
    }
    score
}

/// Deterministic built-in backend over [`lexical_score`].
#[derive(Debug, Clone, Default)]
pub struct LexicalScorer {
    pub cfg: LexicalScorerConfig,
}

impl LexicalScorer {
    pub fn new(cfg: LexicalScorerConfig) -> Self {
        Self { cfg }
    }
}

impl ScorerBackend for LexicalScorer {
    fn score_pairs(
        &self,
        query_repr: &str,
        hints: Option<&HintSet>,
        products: &[CandidateText],
    ) -> Result<Vec<f64>, BackendError> {
        Ok(products
            .iter()
            .map(|p| lexical_score(query_repr, hints, &p.text, &self.cfg))
            .collect())
    }

    /// Plain overlap scaled to 0-100; ties go to the smaller id.
    fn rank_chunk(&self, query: &str, products: &[CandidateText]) -> Result<Vec<ChunkPick>, BackendError> {
        let mut picks: Vec<ChunkPick> = products
            .iter()
            .map(|p| ChunkPick {
                doc_id: p.doc_id.clone(),
                score: (lexical_score(query, None, &p.text, &self.cfg).min(1.0) * 100.0).round() as u8,
            })
            .collect();
        picks.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
        picks.truncate(2);
        Ok(picks)
    }
}
