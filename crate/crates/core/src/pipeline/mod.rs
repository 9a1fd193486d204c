//! End-to-end runs: retrieval, hints and reranking per query, over a pool of
//! workers. Hints are generated while first-stage retrieval runs, except for
//! QE-BM25, which needs them before it can start.

mod config;

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use config::{
    EvalSection, HintsSection, PathsSection, PipelineConfig, PipelineSection, RerankSection, RerankerKind,
    RetrievalSection, RetrieverKind, ScorerKind,
};

use crate::corpus::{load_embeddings, load_products, CorpusError, EmbeddingStore, ProductStore, SuperlativeQuery};
use crate::error::{Classify, ErrorClass};
use crate::eval::{LatencySample, STAGE_HINTS, STAGE_RERANK, STAGE_RETRIEVE};
use crate::hintgen::{gen_hints, CacheError, HintCache, TextProvider};
use crate::hints::HintSet;
use crate::index::{IndexError, InvertedIndex};
use crate::rerank::{
    listwise_rerank, pointwise_rerank, HttpScorer, LexicalScorer, PromptChunkBackend, ScorerBackend, MAX_LISTWISE,
};
use crate::retrieval::{build_variants, retrieve_bm25, retrieve_dense, retrieve_qe_bm25, write_run, RankedList};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("cannot set up backend: {0}")]
    Backend(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Classify for PipelineError {
    fn class(&self) -> ErrorClass {
        match self {
            PipelineError::Config(_) => ErrorClass::Usage,
            PipelineError::Backend(_) => ErrorClass::Backend,
            PipelineError::Index(e) => e.class(),
            _ => ErrorClass::Data,
        }
    }
}

/// One query's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRun {
    pub ranked: RankedList,
    pub latency: LatencySample,
}

/// A query that was skipped, with the stage that failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryFailure {
    pub query_id: String,
    pub stage: String,
    pub class: ErrorClass,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub config: PipelineConfig,
    /// In input query order.
    pub runs: Vec<QueryRun>,
    pub failures: Vec<QueryFailure>,
}

impl RunArtifact {
    pub fn rankings(&self) -> Vec<RankedList> {
        self.runs.iter().map(|r| r.ranked.clone()).collect()
    }

    pub fn latencies(&self) -> Vec<LatencySample> {
        self.runs.iter().map(|r| r.latency.clone()).collect()
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_json(&mut f)?;
        f.flush()
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("bad run artifact: {e}")))
    }

    /// The rankings as a run file.
    pub fn write_run<W: Write>(&self, out: W) -> Result<(), crate::retrieval::RetrievalError> {
        write_run(&self.rankings(), out)
    }
}

/// Assembles a [`Pipeline`]. Anything not supplied is loaded or built from
/// the config.
pub struct PipelineBuilder {
    cfg: PipelineConfig,
    products: Option<Arc<ProductStore>>,
    index: Option<Arc<InvertedIndex>>,
    embeddings: Option<Arc<EmbeddingStore>>,
    query_embeddings: Option<Arc<EmbeddingStore>>,
    provider: Option<Arc<dyn TextProvider>>,
    backend: Option<Arc<dyn ScorerBackend>>,
    cache: Option<Arc<HintCache>>,
    retrieval_delay: Duration,
}

impl PipelineBuilder {
    pub fn new(cfg: PipelineConfig) -> Self {
        Self {
            cfg,
            products: None,
            index: None,
            embeddings: None,
            query_embeddings: None,
            provider: None,
            backend: None,
            cache: None,
            retrieval_delay: Duration::ZERO,
        }
    }

    pub fn products(mut self, p: impl Into<Arc<ProductStore>>) -> Self {
        self.products = Some(p.into());
        self
    }

    pub fn index(mut self, i: impl Into<Arc<InvertedIndex>>) -> Self {
        self.index = Some(i.into());
        self
    }

    pub fn embeddings(mut self, docs: impl Into<Arc<EmbeddingStore>>, queries: impl Into<Arc<EmbeddingStore>>) -> Self {
        self.embeddings = Some(docs.into());
        self.query_embeddings = Some(queries.into());
        self
    }

    pub fn provider(mut self, p: Arc<dyn TextProvider>) -> Self {
        self.provider = Some(p);
        self
    }

    pub fn backend(mut self, b: Arc<dyn ScorerBackend>) -> Self {
        self.backend = Some(b);
        self
    }

    pub fn cache(mut self, c: impl Into<Arc<HintCache>>) -> Self {
        self.cache = Some(c.into());
        self
    }

    /// Extra sleep inside the retrieval stage; stands in for a remote index.
    pub fn retrieval_delay(mut self, d: Duration) -> Self {
        self.retrieval_delay = d;
        self
    }

    pub fn build(self) -> Result<Pipeline, PipelineError> {
        let cfg = self.cfg;
        cfg.validate_with(self.embeddings.is_none())?;
        let products = match self.products {
            Some(p) => p,
            None => {
                let path = cfg
                    .paths
                    .products
                    .as_ref()
                    .ok_or_else(|| PipelineError::Config("paths.products is required".into()))?;
                Arc::new(load_products(path)?)
            }
        };
        let index = match (cfg.pipeline.retriever, self.index) {
            (RetrieverKind::Dense, i) => i,
            (_, Some(i)) => Some(i),
            (_, None) => Some(Arc::new(match &cfg.paths.index {
                Some(path) => {
                    let f = std::fs::File::open(path)?;
                    InvertedIndex::read_snapshot(std::io::BufReader::new(f))?
                }
                None => InvertedIndex::build(&products, cfg.retrieval.field_policy)?,
            })),
        };
        let (embeddings, query_embeddings) = match (cfg.pipeline.retriever, self.embeddings) {
            (RetrieverKind::Dense, Some(e)) => (Some(e), self.query_embeddings),
            (RetrieverKind::Dense, None) => {
                let docs = load_embeddings(cfg.paths.embeddings.as_ref().expect("validated"))?;
                let qs = load_embeddings(cfg.paths.query_embeddings.as_ref().expect("validated"))?;
                (Some(Arc::new(docs)), Some(Arc::new(qs)))
            }
            _ => (None, None),
        };
        let needs_provider = cfg.uses_hints() || cfg.pipeline.scorer == ScorerKind::Prompt;
        let provider = match self.provider {
            Some(p) => Some(p),
            None if needs_provider => Some(
                cfg.hints
                    .provider
                    .clone()
                    .with_env()
                    .and_then(|p| p.build())
                    .map_err(|e| PipelineError::Config(e.to_string()))?,
            ),
            None => None,
        };
        let cache = match self.cache {
            Some(c) => c,
            None => Arc::new(match &cfg.paths.hints_cache {
                Some(path) => HintCache::open(path)?,
                None => HintCache::in_memory(),
            }),
        };
        let backend: Option<Arc<dyn ScorerBackend>> = match (cfg.pipeline.reranker, self.backend) {
            (RerankerKind::None, _) => None,
            (_, Some(b)) => Some(b),
            (_, None) => Some(match cfg.pipeline.scorer {
                ScorerKind::Lexical => Arc::new(LexicalScorer::new(cfg.rerank.lexical)),
                ScorerKind::Http => {
                    let endpoint = cfg.rerank.endpoint.as_deref().expect("validated");
                    let mut s = HttpScorer::new(endpoint, Duration::from_millis(cfg.rerank.timeout_ms));
                    if let Some(n) = cfg.rerank.max_concurrency {
                        s = s.with_max_concurrency(n);
                    }
                    Arc::new(s)
                }
                ScorerKind::Prompt => Arc::new(PromptChunkBackend::new(
                    provider.clone().expect("prompt scorer has a provider"),
                )),
            }),
        };
        Ok(Pipeline {
            cfg,
            products,
            index,
            embeddings,
            query_embeddings,
            provider,
            backend,
            cache,
            retrieval_delay: self.retrieval_delay,
        })
    }
}

pub struct Pipeline {
    cfg: PipelineConfig,
    products: Arc<ProductStore>,
    index: Option<Arc<InvertedIndex>>,
    embeddings: Option<Arc<EmbeddingStore>>,
    query_embeddings: Option<Arc<EmbeddingStore>>,
    provider: Option<Arc<dyn TextProvider>>,
    backend: Option<Arc<dyn ScorerBackend>>,
    cache: Arc<HintCache>,
    retrieval_delay: Duration,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed().as_secs_f64())
}

fn fail(q: &SuperlativeQuery, stage: &str, e: &(impl Classify + std::fmt::Display)) -> QueryFailure {
    QueryFailure {
        query_id: q.id.clone(),
        stage: stage.to_string(),
        class: e.class(),
        message: e.to_string(),
    }
}

impl Pipeline {
    pub fn builder(cfg: PipelineConfig) -> PipelineBuilder {
        PipelineBuilder::new(cfg)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn products(&self) -> &ProductStore {
        &self.products
    }

    pub fn index(&self) -> Option<&InvertedIndex> {
        self.index.as_deref()
    }

    pub fn cache(&self) -> &HintCache {
        &self.cache
    }

    /// Hints for one query, from the cache or the provider.
    pub fn hints(&self, q: &SuperlativeQuery) -> Result<HintSet, QueryFailure> {
        let Some(provider) = self.provider.as_deref() else {
            return Err(QueryFailure {
                query_id: q.id.clone(),
                stage: STAGE_HINTS.into(),
                class: ErrorClass::Usage,
                message: "this pipeline has no hint provider".into(),
            });
        };
        gen_hints(q, provider, Some(&self.cache), self.cfg.hints.num_queries).map_err(|e| fail(q, STAGE_HINTS, &e))
    }

    fn retrieve(&self, q: &SuperlativeQuery, hints: Option<&HintSet>) -> Result<RankedList, QueryFailure> {
        if !self.retrieval_delay.is_zero() {
            thread::sleep(self.retrieval_delay);
        }
        let k = self.cfg.pipeline.k;
        let r = match self.cfg.pipeline.retriever {
            RetrieverKind::Bm25 => retrieve_bm25(self.index.as_deref().expect("bm25 has an index"), q, k),
            RetrieverKind::QeBm25 => {
                let h = hints.expect("qe_bm25 runs after hints");
                let qe = self.cfg.qe();
                build_variants(q, h, &qe).and_then(|v| {
                    retrieve_qe_bm25(self.index.as_deref().expect("qe_bm25 has an index"), &q.id, &v, &qe)
                })
            }
            RetrieverKind::Dense => {
                let qs = self.query_embeddings.as_deref().expect("dense has query vectors");
                let Some(v) = qs.get(&q.id) else {
                    return Err(QueryFailure {
                        query_id: q.id.clone(),
                        stage: STAGE_RETRIEVE.into(),
                        class: ErrorClass::Data,
                        message: format!("no query vector for {}", q.id),
                    });
                };
                retrieve_dense(self.embeddings.as_deref().expect("dense has doc vectors"), &q.id, v, k)
            }
        };
        r.map_err(|e| fail(q, STAGE_RETRIEVE, &e))
    }

    fn rerank(
        &self,
        q: &SuperlativeQuery,
        hints: Option<&HintSet>,
        candidates: RankedList,
    ) -> Result<RankedList, QueryFailure> {
        let Some(backend) = self.backend.as_deref() else {
            return Ok(candidates);
        };
        if candidates.is_empty() {
            return Ok(candidates);
        }
        let hints = hints.filter(|_| self.cfg.hints.enabled);
        let r = match self.cfg.pipeline.reranker {
            RerankerKind::None => return Ok(candidates),
            RerankerKind::Pointwise => pointwise_rerank(
                q,
                hints,
                &candidates,
                &self.products,
                backend,
                self.cfg.enrich_options(),
            ),
            RerankerKind::Listwise => {
                let mut c = candidates;
                c.truncate(MAX_LISTWISE);
                listwise_rerank(q, &c, &self.products, backend, self.cfg.rerank.chunk_strategy).map(|o| o.ranked)
            }
        };
        r.map_err(|e| fail(q, STAGE_RERANK, &e))
    }

    /// Runs one query through every stage.
    pub fn run_query(&self, q: &SuperlativeQuery) -> Result<QueryRun, QueryFailure> {
        let start = Instant::now();
        let mut stages = BTreeMap::new();
        let wants_hints = self.cfg.uses_hints();
        let (hints, candidates) = if self.cfg.pipeline.retriever == RetrieverKind::QeBm25 {
            let (h, th) = timed(|| self.hints(q));
            stages.insert(STAGE_HINTS.to_string(), th);
            let h = h?;
            let (r, tr) = timed(|| self.retrieve(q, Some(&h)));
            stages.insert(STAGE_RETRIEVE.to_string(), tr);
            (Some(h), r?)
        } else if wants_hints {
            let ((h, th), (r, tr)) = thread::scope(|s| {
                let hj = s.spawn(|| timed(|| self.hints(q)));
                let r = timed(|| self.retrieve(q, None));
                (hj.join().expect("hint worker panicked"), r)
            });
            stages.insert(STAGE_HINTS.to_string(), th);
            stages.insert(STAGE_RETRIEVE.to_string(), tr);
            // a retrieval failure is reported ahead of a hint failure
            let r = r?;
            (Some(h?), r)
        } else {
            let (r, tr) = timed(|| self.retrieve(q, None));
            stages.insert(STAGE_RETRIEVE.to_string(), tr);
            (None, r?)
        };
        let ranked = if self.cfg.pipeline.reranker == RerankerKind::None {
            candidates
        } else {
            let (r, t) = timed(|| self.rerank(q, hints.as_ref(), candidates));
            stages.insert(STAGE_RERANK.to_string(), t);
            r?
        };
        Ok(QueryRun {
            ranked,
            latency: LatencySample {
                query_id: q.id.clone(),
                seconds: start.elapsed().as_secs_f64(),
                stages,
            },
        })
    }

    /// Reranks given candidates instead of retrieving them. Hints are fetched
    /// only when the reranker consumes them.
    pub fn rerank_query(&self, q: &SuperlativeQuery, candidates: RankedList) -> Result<QueryRun, QueryFailure> {
        let start = Instant::now();
        let mut stages = BTreeMap::new();
        let hints = if self.cfg.hints.enabled && self.cfg.pipeline.reranker == RerankerKind::Pointwise {
            let (h, t) = timed(|| self.hints(q));
            stages.insert(STAGE_HINTS.to_string(), t);
            Some(h?)
        } else {
            None
        };
        let (r, t) = timed(|| self.rerank(q, hints.as_ref(), candidates));
        stages.insert(STAGE_RERANK.to_string(), t);
        Ok(QueryRun {
            ranked: r?,
            latency: LatencySample {
                query_id: q.id.clone(),
                seconds: start.elapsed().as_secs_f64(),
                stages,
            },
        })
    }

    /// Runs all queries on `worker_count` threads. A failing query is skipped
    /// and recorded; the rest of the run continues.
    pub fn run(&self, queries: &[SuperlativeQuery]) -> RunArtifact {
        self.pooled(queries.len(), |i| self.run_query(&queries[i]))
    }

    /// Reranks each candidate list; lists whose query is unknown are recorded
    /// as failures.
    pub fn rerank_run(&self, queries: &[SuperlativeQuery], candidates: &[RankedList]) -> RunArtifact {
        let by_id: HashMap<&str, &SuperlativeQuery> = queries.iter().map(|q| (q.id.as_str(), q)).collect();
        self.pooled(candidates.len(), |i| {
            let c = &candidates[i];
            match by_id.get(c.query_id.as_str()) {
                Some(q) => self.rerank_query(q, c.clone()),
                None => Err(QueryFailure {
                    query_id: c.query_id.clone(),
                    stage: STAGE_RERANK.into(),
                    class: ErrorClass::Data,
                    message: format!("candidate list for unknown query {}", c.query_id),
                }),
            }
        })
    }

    fn pooled(&self, n: usize, job: impl Fn(usize) -> Result<QueryRun, QueryFailure> + Sync) -> RunArtifact {
        let slots: Vec<Mutex<Option<Result<QueryRun, QueryFailure>>>> = (0..n).map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.cfg.pipeline.worker_count.min(n).max(1);
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let r = job(i);
                    if let Err(f) = &r {
                        log::warn!("query {} failed in {}: {}", f.query_id, f.stage, f.message);
                    }
                    *slots[i].lock().expect("slot lock") = Some(r);
                });
            }
        });
        let mut runs = Vec::with_capacity(n);
        let mut failures = Vec::new();
        for slot in slots {
            match slot.into_inner().expect("slot lock").expect("every slot filled") {
                Ok(r) => runs.push(r),
                Err(f) => failures.push(f),
            }
        }
        RunArtifact {
            config: self.cfg.clone(),
            runs,
            failures,
        }
    }
}
