use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use hintrank::corpus::{
    load_judgments, load_products, load_queries, save_embeddings, save_judgments, save_products, save_queries,
    SuperlativeQuery,
};
use hintrank::eval::{
    breakdown_by, coverage_analysis, evaluate_run, format_breakdown_columns, format_coverage_table,
    format_latency_table, format_metric_columns, latency_stats, CoveragePools, GroupKey, GroupReport, MetricColumn,
    MetricReport, PositiveSetConfig, STAGE_HINTS, STAGE_RERANK, STAGE_RETRIEVE,
};
use hintrank::hintgen::HintCache;
use hintrank::index::{bm25_full_ranking, tokenize, FieldPolicy, InvertedIndex};
use hintrank::pipeline::{Pipeline, PipelineConfig, RerankerKind, RetrieverKind, RunArtifact};
use hintrank::retrieval::{build_variants, load_run, write_run, RankedList};
use hintrank::synth::{synth_world, SynthConfig, MAX_SYNTH_QUERIES};

use crate::{
    fail, BenchArgs, CliError, Command, ConfigArgs, CoverageArgs, EvalArgs, Fields, HintsArgs, IndexArgs, PipelineArgs,
    RerankArgs, Reranker, Retriever, RunArgs, SynthArgs,
};

type Result<T = ()> = std::result::Result<T, CliError>;

pub fn dispatch(cmd: Command) -> Result {
    match cmd {
        Command::Index(a) => index(a),
        Command::Hints(a) => hints(a),
        Command::Retrieve(a) => retrieve(a),
        Command::Rerank(a) => rerank(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Eval(a) => eval(a),
        Command::Coverage(a) => coverage(a),
        Command::Bench(a) => bench(a),
        Command::Synth(a) => synth(a),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::data(format!("{}: {e}", path.display()))
}

/// Like [`fail`], with the offending file named in the message.
fn fail_at<E: hintrank::Classify + std::fmt::Display>(path: &Path) -> impl FnOnce(E) -> CliError + '_ {
    move |e| {
        let mut err = fail(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    }
}

/// The config-file spelling of an enum value.
fn config_name<T: serde::Serialize>(v: T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

/// Config with command-line overrides applied.
fn load_config(a: &ConfigArgs) -> Result<PipelineConfig> {
    let mut cfg = match &a.config {
        Some(path) => PipelineConfig::load(path).map_err(fail)?,
        None => PipelineConfig::default(),
    };
    if let Some(q) = &a.queries {
        cfg.paths.queries = Some(q.clone());
    }
    if let Some(p) = &a.products {
        cfg.paths.products = Some(p.clone());
    }
    if let Some(r) = a.retriever {
        cfg.pipeline.retriever = match r {
            Retriever::Bm25 => RetrieverKind::Bm25,
            Retriever::QeBm25 => RetrieverKind::QeBm25,
            Retriever::Dense => RetrieverKind::Dense,
        };
    }
    if let Some(r) = a.reranker {
        cfg.pipeline.reranker = match r {
            Reranker::None => RerankerKind::None,
            Reranker::Pointwise => RerankerKind::Pointwise,
            Reranker::Listwise => RerankerKind::Listwise,
        };
    }
    if let Some(k) = a.k {
        cfg.pipeline.k = k;
    }
    if let Some(w) = a.workers {
        cfg.pipeline.worker_count = w;
    }
    // settings are checked before any data is read
    cfg.validate().map_err(fail)?;
    Ok(cfg)
}

fn queries_of(cfg: &PipelineConfig) -> Result<Vec<SuperlativeQuery>> {
    let path = cfg
        .paths
        .queries
        .as_ref()
        .ok_or_else(|| CliError::usage("no query file: pass --queries or set paths.queries"))?;
    load_queries(path).map_err(fail_at(path))
}

fn build(cfg: PipelineConfig) -> Result<Pipeline> {
    Pipeline::builder(cfg).build().map_err(fail)
}

/// Reports skipped queries on stderr; a run where every query failed is an error.
fn check_failures(art: &RunArtifact) -> Result {
    for f in &art.failures {
        eprintln!("{}", serde_json::json!({ "failure": f }));
    }
    match art.failures.first() {
        Some(f) if art.runs.is_empty() => Err(CliError {
            class: f.class,
            message: format!(
                "all {} queries failed; first: {} ({})",
                art.failures.len(),
                f.message,
                f.query_id
            ),
        }),
        Some(_) => {
            eprintln!(
                "{} of {} queries failed and were skipped",
                art.failures.len(),
                art.failures.len() + art.runs.len()
            );
            Ok(())
        }
        None => Ok(()),
    }
}

fn emit_run(lists: &[RankedList], out: Option<&PathBuf>) -> Result {
    match out {
        Some(path) => write_run(lists, create(path)?).map_err(fail),
        None => write_run(lists, std::io::stdout().lock()).map_err(fail),
    }
}

fn index(a: IndexArgs) -> Result {
    let products = load_products(&a.products).map_err(fail_at(&a.products))?;
    let policy = match a.fields {
        Fields::TitleDescription => FieldPolicy::TitleDescription,
        Fields::TitleOnly => FieldPolicy::TitleOnly,
    };
    let idx = InvertedIndex::build(&products, policy).map_err(fail)?;
    let mut out = create(&a.out)?;
    idx.write_snapshot(&mut out).map_err(fail)?;
    out.flush().map_err(io_err(&a.out))?;
    println!(
        "indexed {} products, {} terms, avg length {:.2} -> {}",
        idx.doc_count(),
        idx.num_terms(),
        idx.avg_doc_len(),
        a.out.display()
    );
    Ok(())
}

/// A config whose pipeline builds a hint provider and nothing it does not need.
fn hint_config(mut cfg: PipelineConfig) -> PipelineConfig {
    cfg.pipeline.retriever = RetrieverKind::QeBm25;
    cfg.pipeline.reranker = RerankerKind::None;
    cfg.hints.enabled = true;
    cfg
}

fn hints(a: HintsArgs) -> Result {
    let mut cfg = load_config(&a.config)?;
    if let Some(c) = a.cache {
        cfg.paths.hints_cache = Some(c);
    }
    let Some(cache_path) = cfg.paths.hints_cache.clone() else {
        return Err(CliError::usage("no hint cache: pass --cache or set paths.hints_cache"));
    };
    let queries = queries_of(&cfg)?;
    let p = build(hint_config(cfg))?;
    let before = p.cache().len();
    let mut failed = 0;
    for q in &queries {
        if let Err(f) = p.hints(q) {
            eprintln!("{}", serde_json::json!({ "failure": f }));
            failed += 1;
        }
    }
    let added = p.cache().len() - before;
    println!(
        "{} queries: {} new hint sets, {} already cached, {failed} failed -> {}",
        queries.len(),
        added,
        queries.len() - added - failed,
        cache_path.display()
    );
    if failed == queries.len() && failed > 0 {
        return Err(CliError {
            class: hintrank::ErrorClass::Backend,
            message: "hint generation failed for every query".into(),
        });
    }
    Ok(())
}

fn retrieve(a: RunArgs) -> Result {
    let mut cfg = load_config(&a.config)?;
    cfg.pipeline.reranker = RerankerKind::None;
    let queries = queries_of(&cfg)?;
    let art = build(cfg)?.run(&queries);
    check_failures(&art)?;
    emit_run(&art.rankings(), a.out.as_ref())
}

fn rerank(a: RerankArgs) -> Result {
    let cfg = load_config(&a.config)?;
    if cfg.pipeline.reranker == RerankerKind::None {
        return Err(CliError::usage("no reranker: pass --reranker or set pipeline.reranker"));
    }
    let queries = queries_of(&cfg)?;
    let candidates = load_run(&a.run).map_err(fail_at(&a.run))?;
    let art = build(cfg)?.rerank_run(&queries, &candidates);
    check_failures(&art)?;
    emit_run(&art.rankings(), a.out.as_ref())
}

fn pipeline(a: PipelineArgs) -> Result {
    let cfg = load_config(&a.config)?;
    let queries = queries_of(&cfg)?;
    let art = build(cfg)?.run(&queries);
    if let Some(path) = &a.artifact {
        art.save_json(path).map_err(io_err(path))?;
    }
    check_failures(&art)?;
    emit_run(&art.rankings(), a.out.as_ref())
}

fn eval(a: EvalArgs) -> Result {
    let positive: PositiveSetConfig = a.positive.parse().map_err(fail)?;
    let cols = if a.metrics.is_empty() {
        MetricColumn::all()
    } else {
        a.metrics
            .iter()
            .map(|m| m.parse())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(fail)?
    };
    let group_key: Option<GroupKey> = a.group_by.as_deref().map(str::parse).transpose().map_err(fail)?;
    if !a.name.is_empty() && a.name.len() != a.run.len() {
        return Err(CliError::usage(format!(
            "{} names for {} runs",
            a.name.len(),
            a.run.len()
        )));
    }
    let judgments = load_judgments(&a.judgments).map_err(fail_at(&a.judgments))?;
    let queries = match &a.queries {
        Some(p) => load_queries(p).map_err(fail_at(p))?,
        None if group_key == Some(GroupKey::ParentCategory) => {
            return Err(CliError::usage("--group-by parent_category needs --queries"))
        }
        None => Vec::new(),
    };

    let mut rows: Vec<(String, MetricReport, Option<Vec<GroupReport>>)> = Vec::new();
    for (i, path) in a.run.iter().enumerate() {
        let name = match a.name.get(i) {
            Some(n) => n.clone(),
            None => path
                .file_stem()
                .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned()),
        };
        let run = load_run(path).map_err(fail_at(path))?;
        let report = evaluate_run(&run, &judgments, &positive, a.depth).map_err(fail)?;
        let groups = group_key
            .map(|k| breakdown_by(&run, &judgments, &queries, k, &positive, a.depth))
            .transpose()
            .map_err(fail)?;
        rows.push((name, report, groups));
    }

    let table: Vec<(&str, &MetricReport)> = rows.iter().map(|(n, r, _)| (n.as_str(), r)).collect();
    print!("{}", format_metric_columns(&table, &cols));
    for (name, report, groups) in &rows {
        if report.skipped_no_positives > 0 {
            eprintln!(
                "{name}: {} queries without positives skipped",
                report.skipped_no_positives
            );
        }
        if let Some(groups) = groups {
            println!();
            if rows.len() > 1 {
                println!("{name}");
            }
            print!("{}", format_breakdown_columns(groups, !a.hide_flagged, &cols));
        }
    }
    if let Some(path) = &a.json {
        let records: Vec<_> = rows
            .iter()
            .map(|(name, report, groups)| serde_json::json!({ "system": name, "report": report, "groups": groups }))
            .collect();
        let doc = serde_json::json!({
            "positive": a.positive,
            "depth": a.depth,
            "runs": records,
        });
        let mut out = create(path)?;
        serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| CliError::data(e.to_string()))?;
        writeln!(out).and_then(|_| out.flush()).map_err(io_err(path))?;
    }
    Ok(())
}

fn coverage(a: CoverageArgs) -> Result {
    let mut cfg = load_config(&a.config)?;
    if let Some(j) = a.judgments {
        cfg.paths.judgments = Some(j);
    }
    if a.no_brand_variants {
        cfg.retrieval.include_brand_variants = false;
    }
    let positive: PositiveSetConfig = a.positive.parse().map_err(fail)?;
    let jpath = cfg
        .paths
        .judgments
        .clone()
        .ok_or_else(|| CliError::usage("no judgments: pass --judgments or set paths.judgments"))?;
    let judgments = load_judgments(&jpath).map_err(fail_at(&jpath))?;
    let priority = match &a.priority {
        Some(p) => Some(load_run(p).map_err(fail_at(p))?),
        None => None,
    };
    let queries = queries_of(&cfg)?;
    let qe = cfg.qe();
    let p = build(hint_config(cfg))?;
    let index = p.index().expect("bm25-family pipelines keep an index");
    let mut pools = Vec::new();
    for q in &queries {
        let h = p.hints(q).map_err(|f| CliError {
            class: f.class,
            message: format!("{}: {}", f.query_id, f.message),
        })?;
        let variants = build_variants(q, &h, &qe).map_err(fail)?;
        pools.push(CoveragePools {
            query_id: q.id.clone(),
            variant_rankings: variants
                .iter()
                .map(|v| bm25_full_ranking(index, &tokenize(v)))
                .collect(),
            priority: priority
                .as_ref()
                .and_then(|runs| runs.iter().find(|r| r.query_id == q.id))
                .map(|r| r.doc_ids().into_iter().map(str::to_string).collect()),
        });
    }
    let report = coverage_analysis(&pools, &judgments, &positive, &a.ks).map_err(fail)?;
    print!("{}", format_coverage_table(&report));
    println!(
        "{} queries, {} without positives skipped",
        report.n_queries, report.skipped_no_positives
    );
    Ok(())
}

fn bench(a: BenchArgs) -> Result {
    if a.repeat == 0 {
        return Err(CliError::usage("--repeat must be at least 1"));
    }
    let cfg = load_config(&a.config)?;
    let queries = queries_of(&cfg)?;
    if queries.is_empty() {
        return Err(CliError::data("the query file is empty"));
    }
    let system = format!(
        "{}+{}",
        config_name(cfg.pipeline.retriever),
        config_name(cfg.pipeline.reranker)
    );
    let provider = config_name(cfg.hints.provider.kind);
    let mut samples = Vec::new();
    for _ in 0..a.repeat {
        let mut builder = Pipeline::builder(cfg.clone());
        if !a.warm_cache {
            builder = builder.cache(HintCache::in_memory());
        }
        let art = builder.build().map_err(fail)?.run(&queries);
        check_failures(&art)?;
        samples.extend(art.latencies());
    }
    let mut rows = Vec::new();
    let totals: Vec<f64> = samples.iter().map(|s| s.seconds).collect();
    rows.push(("total".to_string(), latency_stats(&totals).map_err(fail)?));
    for stage in [STAGE_RETRIEVE, STAGE_HINTS, STAGE_RERANK] {
        let xs: Vec<f64> = samples.iter().filter_map(|s| s.stages.get(stage).copied()).collect();
        if !xs.is_empty() {
            rows.push((stage.to_string(), latency_stats(&xs).map_err(fail)?));
        }
    }
    println!(
        "{system}, hint provider {provider}, {} queries x {} repeats, {} cache, seconds",
        queries.len(),
        a.repeat,
        if a.warm_cache { "warm" } else { "cold" }
    );
    let table: Vec<(&str, &_)> = rows.iter().map(|(n, s)| (n.as_str(), s)).collect();
    print!("{}", format_latency_table(&table));
    Ok(())
}

const SYNTH_CONFIG: &str = r#"# Synthetic dataset written by `hintrank synth`. Hints come from hints.jsonl.
[pipeline]
retriever = "qe_bm25"
reranker = "pointwise"
scorer = "lexical"
k = 50

[paths]
products = "products.jsonl"
queries = "queries.jsonl"
judgments = "judgments.jsonl"
embeddings = "embeddings.jsonl"
query_embeddings = "query_embeddings.jsonl"
hints_cache = "hints.jsonl"

[hints.provider]
kind = "mock"
"#;

fn synth(a: SynthArgs) -> Result {
    if a.queries == 0 || a.queries > MAX_SYNTH_QUERIES {
        return Err(CliError::usage(format!(
            "--queries must be between 1 and {MAX_SYNTH_QUERIES}"
        )));
    }
    std::fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    let w = synth_world(&SynthConfig {
        seed: a.seed,
        n_queries: a.queries,
        ..SynthConfig::default()
    });
    let dir = &a.out;
    save_products(&w.products, dir.join("products.jsonl")).map_err(fail)?;
    save_queries(&w.queries, dir.join("queries.jsonl")).map_err(fail)?;
    save_judgments(&w.judgments, dir.join("judgments.jsonl")).map_err(fail)?;
    save_embeddings(&w.embeddings, dir.join("embeddings.jsonl")).map_err(fail)?;
    save_embeddings(&w.query_embeddings, dir.join("query_embeddings.jsonl")).map_err(fail)?;
    let cache_path = dir.join("hints.jsonl");
    if cache_path.exists() {
        std::fs::remove_file(&cache_path).map_err(io_err(&cache_path))?;
    }
    let cache = HintCache::open(&cache_path).map_err(fail)?;
    for (q, h) in &w.hints {
        cache.insert(&q.id, &q.text, h).map_err(fail)?;
    }
    let cfg_path = dir.join("config.toml");
    std::fs::write(&cfg_path, SYNTH_CONFIG).map_err(io_err(&cfg_path))?;
    println!(
        "{} products, {} queries, {} judgments -> {}",
        w.products.len(),
        w.queries.len(),
        w.judgments.len(),
        dir.display()
    );
    Ok(())
}
