use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::eval::{PositiveSetConfig, DEFAULT_DEPTH};
use crate::hintgen::{ProviderConfig, ProviderKind};
use crate::hints::{EnrichOptions, EnrichmentMode, DEFAULT_COVERAGE_QUERIES};
use crate::index::FieldPolicy;
use crate::rerank::{ChunkStrategy, LexicalScorerConfig, MAX_LISTWISE};
use crate::retrieval::QEConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrieverKind {
    #[default]
    Bm25,
    QeBm25,
    Dense,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RerankerKind {
    #[default]
    None,
    Pointwise,
    Listwise,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    #[default]
    Lexical,
    Http,
    /// Chunk-ranking prompt sent to the hint provider (listwise only).
    Prompt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub retriever: RetrieverKind,
    pub reranker: RerankerKind,
    pub scorer: ScorerKind,
    pub k: usize,
    pub worker_count: usize,
    pub seed: u64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            retriever: RetrieverKind::Bm25,
            reranker: RerankerKind::None,
            scorer: ScorerKind::Lexical,
            k: 50,
            worker_count: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub products: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    /// Prebuilt index snapshot; built from products when absent.
    pub index: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    /// Query vectors keyed by query id, for dense retrieval.
    pub query_embeddings: Option<PathBuf>,
    pub hints_cache: Option<PathBuf>,
    pub judgments: Option<PathBuf>,
}

impl PathsSection {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.products,
            &mut self.queries,
            &mut self.index,
            &mut self.embeddings,
            &mut self.query_embeddings,
            &mut self.hints_cache,
            &mut self.judgments,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    pub max_candidates: usize,
    pub include_brand_variants: bool,
    pub field_policy: FieldPolicy,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self {
            max_candidates: 50_000,
            include_brand_variants: true,
            field_policy: FieldPolicy::TitleDescription,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HintsSection {
    /// Use hints for pointwise reranking. QE-BM25 always needs them.
    pub enabled: bool,
    pub mode: EnrichmentMode,
    pub include_synonyms: bool,
    pub num_queries: usize,
    pub provider: ProviderConfig,
}

impl Default for HintsSection {
    fn default() -> Self {
        Self {
            enabled: true,
            mode: EnrichmentMode::CoverageQuery,
            include_synonyms: false,
            num_queries: DEFAULT_COVERAGE_QUERIES,
            provider: ProviderConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RerankSection {
    pub chunk_strategy: ChunkStrategy,
    pub lexical: LexicalScorerConfig,
    /// Base URL of a scoring service.
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub max_concurrency: Option<usize>,
}

impl Default for RerankSection {
    fn default() -> Self {
        Self {
            chunk_strategy: ChunkStrategy::Contiguous,
            lexical: LexicalScorerConfig::default(),
            endpoint: None,
            timeout_ms: 30_000,
            max_concurrency: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Comma-separated labels counted as positive: rb, rnb, irr.
    pub positive: String,
    pub depth: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            positive: "rb".into(),
            depth: DEFAULT_DEPTH,
        }
    }
}

/// Everything a run depends on. Serialized into the run artifact.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub pipeline: PipelineSection,
    pub paths: PathsSection,
    pub retrieval: RetrievalSection,
    pub hints: HintsSection,
    pub rerank: RerankSection,
    pub eval: EvalSection,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(dir) = path.parent() {
            cfg.paths.resolve(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn qe(&self) -> QEConfig {
        QEConfig {
            k: self.pipeline.k,
            max_candidates: self.retrieval.max_candidates,
            include_brand_variants: self.retrieval.include_brand_variants,
        }
    }

    pub fn enrich_options(&self) -> EnrichOptions {
        EnrichOptions {
            mode: self.hints.mode,
            include_synonyms: self.hints.include_synonyms,
        }
    }

    pub fn positive_set(&self) -> Result<PositiveSetConfig, PipelineError> {
        self.eval
            .positive
            .parse()
            .map_err(|e: crate::eval::EvalError| PipelineError::Config(e.to_string()))
    }

    /// Whether any stage consumes hints.
    pub fn uses_hints(&self) -> bool {
        self.pipeline.retriever == RetrieverKind::QeBm25
            || (self.hints.enabled && self.pipeline.reranker == RerankerKind::Pointwise)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.validate_with(true)
    }

    /// `need_vectors` is false when dense vectors are supplied in memory.
    pub(crate) fn validate_with(&self, need_vectors: bool) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let p = &self.pipeline;
        if p.worker_count == 0 {
            return bad("worker_count must be at least 1".into());
        }
        if p.k == 0 {
            return bad("k must be at least 1".into());
        }
        if p.retriever == RetrieverKind::QeBm25 {
            if !self.hints.enabled {
                return bad("qe_bm25 retrieval needs hints.enabled".into());
            }
            self.qe().validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if p.retriever == RetrieverKind::Dense
            && need_vectors
            && (self.paths.embeddings.is_none() || self.paths.query_embeddings.is_none())
        {
            return bad("dense retrieval needs paths.embeddings and paths.query_embeddings".into());
        }
        if p.reranker == RerankerKind::Listwise && p.k > MAX_LISTWISE {
            return bad(format!(
                "listwise reranking takes at most {MAX_LISTWISE} candidates, k is {}",
                p.k
            ));
        }
        if p.reranker != RerankerKind::None {
            match p.scorer {
                ScorerKind::Http if self.rerank.endpoint.as_deref().is_none_or(str::is_empty) => {
                    return bad("http scorer needs rerank.endpoint".into());
                }
                ScorerKind::Prompt if p.reranker != RerankerKind::Listwise => {
                    return bad("prompt scorer only supports listwise reranking".into());
                }
                _ => {}
            }
        }
        if self.hints.num_queries == 0 {
            return bad("hints.num_queries must be at least 1".into());
        }
        if self.uses_hints() || p.scorer == ScorerKind::Prompt {
            // the endpoint may come from the environment
            self.hints
                .provider
                .clone()
                .with_env()
                .and_then(|p| p.validate())
                .map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if self.hints.provider.kind == ProviderKind::Mock && self.hints.provider.seed != p.seed {
            log::debug!("mock provider seed differs from pipeline seed");
        }
        self.rerank.lexical.validate().map_err(PipelineError::Config)?;
        if self.eval.depth == 0 {
            return bad("eval.depth must be at least 1".into());
        }
        self.positive_set()?;
        Ok(())
    }
}
