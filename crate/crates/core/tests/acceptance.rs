//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Everything runs offline with the mock provider and the lexical
//! scorer.

// `ensure!` negates comparisons on purpose: a NaN must fail the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use hintrank::corpus::{ProductStore, SuperlativeQuery};
use hintrank::eval::{
    average_precision, breakdown_by, coverage_analysis, evaluate_run, format_breakdown_table, format_metric_table,
    latency_stats, mean_average_precision, mrr, percentile_nearest_rank, precision_at_k, reciprocal_rank,
    CoveragePools, GroupKey, PositiveSetConfig, DEFAULT_DEPTH,
};
use hintrank::hintgen::{Delayed, MockProvider, ProviderKind, TextProvider};
use hintrank::hints::{
    enrich_query, format_pointwise_input, parse_hintset, serialize_hintset, Analysis, BrandHint, EnrichmentMode,
    FeatureHint, HintSet,
};
use hintrank::index::ScoredDoc;
use hintrank::index::{bm25_full_ranking, tokenize, FieldPolicy, InvertedIndex};
use hintrank::pipeline::{Pipeline, PipelineConfig, RerankerKind, RetrieverKind, ScorerKind};
use hintrank::rerank::{
    chunk_positions, listwise_rerank, BackendError, CandidateText, ChunkPick, ChunkStrategy, ScorerBackend,
};
use hintrank::retrieval::{build_variants, retrieve_bm25, retrieve_qe_bm25, QEConfig, RankedList};
use hintrank::synth::{synth_world, SynthConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

/// Every pipeline config built here; audited by the offline check.
static CONFIGS: Mutex<Vec<PipelineConfig>> = Mutex::new(Vec::new());

fn offline_config(mut cfg: PipelineConfig) -> PipelineConfig {
    cfg.hints.provider.kind = ProviderKind::Mock;
    cfg.pipeline.scorer = ScorerKind::Lexical;
    CONFIGS.lock().unwrap().push(cfg.clone());
    cfg
}

// ---------------------------------------------------------------------------
// BM25 and QE-BM25 against a dense brute-force matrix

const K1: f64 = 1.2;
const B: f64 = 0.75;
const VOCAB: [&str; 24] = [
    "tent", "lamp", "best", "rain", "proof", "light", "heavy", "quiet", "fast", "steel", "wood", "red", "blue", "kid",
    "pro", "max", "mini", "eco", "smart", "soft", "hard", "long", "short", "warm",
];

struct Corpus {
    ids: Vec<String>,
    docs: Vec<Vec<String>>,
}

fn random_corpus(rng: &mut ChaCha8Rng) -> Corpus {
    let n = rng.gen_range(1..=500);
    let vocab = rng.gen_range(3..=VOCAB.len());
    let mut ids: Vec<String> = (0..n).map(|i| format!("d{:04}", (i * 7919) % 10_000)).collect();
    ids.sort();
    ids.dedup();
    let docs = ids
        .iter()
        .map(|_| {
            (0..rng.gen_range(1..=12))
                .map(|_| VOCAB[rng.gen_range(0..vocab)].to_string())
                .collect()
        })
        .collect();
    Corpus { ids, docs }
}

/// Score of every doc for every query token list, straight from the definition.
fn bm25_matrix(c: &Corpus, queries: &[Vec<String>]) -> Vec<Vec<f64>> {
    let n = c.docs.len() as f64;
    let avgdl = c.docs.iter().map(|d| d.len() as u64).sum::<u64>() as f64 / n;
    queries
        .iter()
        .map(|q| {
            c.docs
                .iter()
                .map(|d| {
                    let mut s = 0.0;
                    for t in q {
                        let tf = d.iter().filter(|w| *w == t).count() as f64;
                        if tf == 0.0 {
                            continue;
                        }
                        let df = c.docs.iter().filter(|e| e.contains(t)).count() as f64;
                        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                        s += idf * (tf * (K1 + 1.0)) / (tf + K1 * (1.0 - B + B * d.len() as f64 / avgdl));
                    }
                    s
                })
                .collect()
        })
        .collect()
}

fn rank_desc(mut rows: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    // doc numbers follow id order, so ties fall back to ascending id
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    rows
}

fn qe_oracle(c: &Corpus, variants: &[Vec<String>], max_candidates: usize, k: usize) -> Vec<(usize, f64)> {
    let m = bm25_matrix(c, variants);
    let mut kept = vec![vec![0.0f64; c.docs.len()]; variants.len()];
    for (v, row) in m.iter().enumerate() {
        let hits: Vec<(usize, f64)> = row.iter().copied().enumerate().filter(|(_, s)| *s > 0.0).collect();
        for (d, s) in rank_desc(hits).into_iter().take(max_candidates) {
            kept[v][d] = s;
        }
    }
    let mut rows = Vec::new();
    for d in 0..c.docs.len() {
        let mut col: Vec<f64> = kept.iter().map(|r| r[d]).filter(|s| *s > 0.0).collect();
        if col.is_empty() {
            continue;
        }
        // same summation order as the engine, so exact ties stay exact
        col.sort_by(f64::total_cmp);
        rows.push((d, col.iter().sum::<f64>() / variants.len() as f64));
    }
    let mut ranked = rank_desc(rows);
    ranked.truncate(k);
    ranked
}

fn index_of(c: &Corpus) -> InvertedIndex {
    InvertedIndex::from_documents(
        c.ids.iter().cloned().zip(c.docs.iter().map(|d| d.join(" "))),
        FieldPolicy::TitleDescription,
    )
    .unwrap()
}

fn random_query(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<String> {
    (0..rng.gen_range(0..=max_len))
        .map(|_| {
            if rng.gen_bool(0.1) {
                "zzz".to_string()
            } else {
                VOCAB[rng.gen_range(0..VOCAB.len())].to_string()
            }
        })
        .collect()
}

fn qe_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for corpus_no in 0..120 {
        let c = random_corpus(&mut rng);
        let index = index_of(&c);
        let n_variants = rng.gen_range(2..=13);
        let mut variants: Vec<Vec<String>> = (0..n_variants).map(|_| random_query(&mut rng, 5)).collect();
        if variants.iter().all(Vec::is_empty) {
            variants[0].push("tent".into());
        }
        let max_candidates = [2, 10, usize::MAX][corpus_no % 3];
        let k = rng.gen_range(1..=max_candidates.min(60));
        let cfg = QEConfig {
            k,
            max_candidates,
            include_brand_variants: false,
        };
        let texts: Vec<String> = variants.iter().map(|v| v.join(" ")).collect();
        let got = retrieve_qe_bm25(&index, "q", &texts, &cfg).map_err(|e| format!("corpus {corpus_no}: {e}"))?;
        let want = qe_oracle(&c, &variants, max_candidates, k);
        ensure!(
            got.len() == want.len(),
            "corpus {corpus_no}: {} results, oracle {}",
            got.len(),
            want.len()
        );
        for (g, (d, s)) in got.entries.iter().zip(&want) {
            ensure!(
                g.doc_id == c.ids[*d],
                "corpus {corpus_no}: ranking differs at {}",
                g.doc_id
            );
            ensure!(
                (g.score - s).abs() <= 1e-9,
                "corpus {corpus_no}: score {} vs {s}",
                g.score
            );
        }
        checked += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1}s");
    Ok(format!("{checked} corpora in {secs:.2}s"))
}

fn single_variant_degeneracy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut c = random_corpus(&mut rng);
    while c.docs.len() < 200 {
        c = random_corpus(&mut rng);
    }
    let index = index_of(&c);
    let mut n = 0;
    while n < 1000 {
        let q = random_query(&mut rng, 6);
        if tokenize(&q.join(" ")).is_empty() {
            continue;
        }
        let sq = SuperlativeQuery {
            id: format!("q{n}"),
            text: q.join(" "),
            parent_category: "x".into(),
            sub_category: "y".into(),
        };
        let k = rng.gen_range(1..=100);
        let max_candidates = [k, 10 * k, 50_000][n % 3];
        let plain = retrieve_bm25(&index, &sq, k).map_err(|e| e.to_string())?;
        let qe = retrieve_qe_bm25(
            &index,
            &sq.id,
            std::slice::from_ref(&sq.text),
            &QEConfig {
                k,
                max_candidates,
                include_brand_variants: false,
            },
        )
        .map_err(|e| e.to_string())?;
        ensure!(
            plain == qe,
            "query {:?} k={k}: QE {:?} vs BM25 {:?}",
            sq.text,
            qe.entries.first(),
            plain.entries.first()
        );
        n += 1;
    }
    Ok(format!("{n} queries identical"))
}

// ---------------------------------------------------------------------------
// metrics

fn ref_precision(ranking: &[String], pos: &HashSet<String>, k: usize) -> f64 {
    (0..k)
        .filter(|&i| i < ranking.len() && pos.contains(&ranking[i]))
        .count() as f64
        / k as f64
}

fn ref_ap(ranking: &[String], pos: &HashSet<String>) -> f64 {
    if pos.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for p in pos {
        if let Some(r) = ranking.iter().position(|d| d == p) {
            total += ref_precision(ranking, pos, r + 1);
        }
    }
    total / pos.len() as f64
}

fn ref_rr(ranking: &[String], pos: &HashSet<String>) -> f64 {
    pos.iter()
        .filter_map(|p| ranking.iter().position(|d| d == p))
        .min()
        .map_or(0.0, |r| 1.0 / (r + 1) as f64)
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let mut rankings = Vec::new();
    let mut positives = Vec::new();
    for i in 0..1000 {
        let universe: Vec<String> = (0..rng.gen_range(1..80)).map(|d| format!("d{d}")).collect();
        let mut ranking = universe.clone();
        ranking.shuffle(&mut rng);
        ranking.truncate(rng.gen_range(0..=universe.len()));
        let pos: HashSet<String> = universe.iter().filter(|_| rng.gen_bool(0.2)).cloned().collect();
        for k in [1, 3, 5, 10, 20] {
            ensure!(
                close(precision_at_k(&ranking, &pos, k), ref_precision(&ranking, &pos, k)),
                "instance {i}: P@{k}"
            );
        }
        ensure!(
            close(average_precision(&ranking, &pos), ref_ap(&ranking, &pos)),
            "instance {i}: AP"
        );
        ensure!(
            close(reciprocal_rank(&ranking, &pos), ref_rr(&ranking, &pos)),
            "instance {i}: RR"
        );
        rankings.push(ranking);
        positives.push(pos);
    }
    let n = rankings.len() as f64;
    let ref_map = rankings.iter().zip(&positives).map(|(r, p)| ref_ap(r, p)).sum::<f64>() / n;
    let ref_mrr = rankings.iter().zip(&positives).map(|(r, p)| ref_rr(r, p)).sum::<f64>() / n;
    let pairs: Vec<(Vec<String>, HashSet<String>)> = rankings.iter().cloned().zip(positives.iter().cloned()).collect();
    ensure!(close(mean_average_precision(&pairs), ref_map), "MAP");
    ensure!(close(mrr(&pairs), ref_mrr), "MRR");

    let dir = common::fixture("eval_toy");
    let queries = hintrank::corpus::load_queries(dir.join("queries.jsonl")).map_err(|e| e.to_string())?;
    let judgments = hintrank::corpus::load_judgments(dir.join("judgments.jsonl")).map_err(|e| e.to_string())?;
    let run = hintrank::retrieval::load_run(dir.join("run.jsonl")).map_err(|e| e.to_string())?;
    let cfg = PositiveSetConfig::default();
    let report = evaluate_run(&run, &judgments, &cfg, DEFAULT_DEPTH).map_err(|e| e.to_string())?;
    let groups = breakdown_by(
        &run,
        &judgments,
        &queries,
        GroupKey::ParentCategory,
        &cfg,
        DEFAULT_DEPTH,
    )
    .map_err(|e| e.to_string())?;
    let text = format!(
        "{}\n{}",
        format_metric_table(&[("toy", &report)]),
        format_breakdown_table(&groups, true)
    );
    let want = std::fs::read_to_string(dir.join("expected_report.txt")).map_err(|e| e.to_string())?;
    ensure!(text == want, "golden report differs:\n{text}");
    Ok("1000 instances within 1e-12; golden report byte-exact".into())
}

// ---------------------------------------------------------------------------
// coverage

fn coverage_shape() -> Outcome {
    let w = synth_world(&SynthConfig::default());
    let index = InvertedIndex::build(&w.products, FieldPolicy::TitleDescription).map_err(|e| e.to_string())?;
    let qe = QEConfig::default();
    let pools: Vec<CoveragePools> = w
        .hints
        .iter()
        .map(|(q, h)| CoveragePools {
            query_id: q.id.clone(),
            variant_rankings: build_variants(q, h, &qe)
                .unwrap()
                .iter()
                .map(|v| bm25_full_ranking(&index, &tokenize(v)))
                .collect(),
            priority: None,
        })
        .collect();
    // the original query alone, so the curve has room to grow
    let plain: Vec<CoveragePools> = w
        .hints
        .iter()
        .map(|(q, _)| CoveragePools {
            query_id: q.id.clone(),
            variant_rankings: vec![bm25_full_ranking(&index, &tokenize(&q.text))],
            priority: None,
        })
        .collect();
    let size = w.products.len();
    let ks = [1, 2, 5, 10, 20, 50, 100, 200, size];
    let cfg = PositiveSetConfig::default();
    let base = coverage_analysis(&plain, &w.judgments, &cfg, &ks).map_err(|e| e.to_string())?;
    check_coverage_rows(&base, &plain, &w, &cfg, size)?;
    let report = coverage_analysis(&pools, &w.judgments, &cfg, &ks).map_err(|e| e.to_string())?;
    check_coverage_rows(&report, &pools, &w, &cfg, size)?;
    let at = |r: &hintrank::eval::CoverageReport, i: usize| r.rows[i].avg_coverage * 100.0;
    Ok(format!(
        "{} queries; original query {:.2}% at k=1, {:.2}% at k=50; with hints {:.2}% at k=1; both 100.00%/100.00% at k={size}",
        report.n_queries,
        at(&base, 0),
        at(&base, 5),
        at(&report, 0)
    ))
}

fn check_coverage_rows(
    report: &hintrank::eval::CoverageReport,
    pools: &[CoveragePools],
    w: &hintrank::synth::SynthWorld,
    cfg: &PositiveSetConfig,
    size: usize,
) -> Result<(), String> {
    for pair in report.rows.windows(2) {
        ensure!(
            pair[0].avg_coverage <= pair[1].avg_coverage,
            "avg_coverage drops at k={}",
            pair[1].k
        );
        ensure!(
            pair[0].perfect_coverage <= pair[1].perfect_coverage,
            "perfect_coverage drops at k={}",
            pair[1].k
        );
    }
    let last = report.rows.last().unwrap();
    ensure!(
        last.avg_coverage == 1.0 && last.perfect_coverage == 1.0,
        "k={size}: {last:?}"
    );

    // set-union oracle for every row
    for row in &report.rows {
        let mut sum = 0.0;
        for p in pools {
            let rel = w.judgments.positives(&p.query_id, &cfg.positive_labels);
            let pool: HashSet<&String> = p.variant_rankings.iter().flat_map(|r| r.iter().take(row.k)).collect();
            sum += rel.iter().filter(|d| pool.contains(d)).count() as f64 / rel.len() as f64;
        }
        let want = sum / pools.len() as f64;
        ensure!(
            (row.avg_coverage - want).abs() < 1e-12,
            "k={}: {} vs oracle {want}",
            row.k,
            row.avg_coverage
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// hint parsing

fn random_text(rng: &mut ChaCha8Rng, nonblank: bool) -> String {
    const PIECES: [&str; 16] = [
        "a",
        "Z",
        "9",
        " ",
        "\"",
        "'",
        "\\",
        "<",
        ">",
        "#",
        "\n",
        "\t",
        "é",
        "日",
        "</brands>",
        "\u{1}",
    ];
    loop {
        let s: String = (0..rng.gen_range(0..12))
            .map(|_| *PIECES.choose(rng).unwrap())
            .collect();
        if !nonblank || !s.trim().is_empty() {
            return s;
        }
    }
}

fn random_hintset(rng: &mut ChaCha8Rng, n_queries: usize) -> HintSet {
    let list = |rng: &mut ChaCha8Rng| (0..rng.gen_range(0..4)).map(|_| random_text(rng, false)).collect();
    HintSet {
        analysis: Analysis {
            domain: random_text(rng, false),
            ranking_intent: random_text(rng, false),
            query_clarification: random_text(rng, false),
        },
        brands: (0..rng.gen_range(1..=10))
            .map(|_| BrandHint {
                name: random_text(rng, true),
                confidence: rng.gen_range(0..=100),
            })
            .collect(),
        features: (0..rng.gen_range(1..=10))
            .map(|_| FeatureHint {
                name: random_text(rng, true),
                synonyms: list(rng),
                category: random_text(rng, false),
                importance: rng.gen_range(1..=10),
                brands_known_for: list(rng),
            })
            .collect(),
        coverage_queries: (0..n_queries).map(|_| random_text(rng, true)).collect(),
    }
}

fn hint_parsing() -> Outcome {
    let (_, cases) = common::golden_hint_cases();
    let mut wrong = Vec::new();
    for c in &cases {
        let ok = match (parse_hintset(&c.raw, c.expected_queries), &c.expect) {
            (Ok(h), Ok(want)) => &h == want,
            (Err(e), Err(want)) => common::error_matches(&e, want),
            _ => false,
        };
        if !ok {
            wrong.push(c.name.clone());
        }
    }
    ensure!(wrong.is_empty(), "golden cases failed: {wrong:?}");

    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut seeds = Vec::new();
    for i in 0..10_000 {
        let n = rng.gen_range(1..=12);
        let h = random_hintset(&mut rng, n);
        let text = serialize_hintset(&h);
        match parse_hintset(&text, n) {
            Ok(back) if back == h => {}
            other => return Err(format!("round trip {i} failed: {other:?}")),
        }
        if i < 64 {
            seeds.push(text.into_bytes());
        }
    }

    // half uniform bytes, half mutated serializations
    let mut panics = 0;
    let (mut accepted, mut rejected) = (0usize, 0usize);
    for i in 0..1_000_000 {
        let bytes: Vec<u8> = if i % 2 == 0 {
            (0..rng.gen_range(0..96)).map(|_| rng.gen()).collect()
        } else {
            let mut b = seeds[i % seeds.len()].clone();
            for _ in 0..rng.gen_range(1..4) {
                let at = rng.gen_range(0..=b.len());
                match rng.gen_range(0..3) {
                    0 if at < b.len() => b[at] = rng.gen(),
                    1 => b.truncate(at),
                    _ => {
                        let frag: &[u8] = [&b"<brands>"[..], b"</features>", b"\"", b"[", b"{", b"#", b"\\"]
                            .choose(&mut rng)
                            .unwrap();
                        b.splice(at..at, frag.iter().copied());
                    }
                }
            }
            b
        };
        let text = String::from_utf8_lossy(&bytes);
        match catch_unwind(AssertUnwindSafe(|| parse_hintset(&text, 3).is_ok())) {
            Ok(true) => accepted += 1,
            Ok(false) => rejected += 1,
            Err(_) => panics += 1,
        }
    }
    ensure!(panics == 0, "{panics} inputs panicked");
    Ok(format!(
        "golden 50/50; 10000 round trips; 1000000 random inputs without a crash ({accepted} accepted, {rejected} rejected)"
    ))
}

fn pointwise_format() -> Outcome {
    let (product, cases) = common::golden_hint_cases();
    let q = SuperlativeQuery {
        id: "g".into(),
        text: "best tent".into(),
        parent_category: "Sports".into(),
        sub_category: "Tents".into(),
    };
    let mut n = 0;
    for c in &cases {
        let (Ok(h), Some(want)) = (&c.expect, &c.pointwise) else {
            continue;
        };
        let enriched = enrich_query(&q, h, EnrichmentMode::CoverageQuery).map_err(|e| e.to_string())?;
        let got = format_pointwise_input(&enriched, h, &product);
        ensure!(&got == want, "{}: {got:?} != {want:?}", c.name);
        ensure!(
            got == format_pointwise_input(&enriched, h, &product),
            "{}: not deterministic",
            c.name
        );
        n += 1;
    }
    ensure!(n > 0, "no accepted golden cases");
    Ok(format!("{n} golden inputs byte-identical"))
}

// ---------------------------------------------------------------------------
// listwise

/// Chunk scores are a strictly increasing function of a hidden global relevance.
struct MonotoneBackend {
    score: HashMap<String, u8>,
}

impl ScorerBackend for MonotoneBackend {
    fn score_pairs(&self, _: &str, _: Option<&HintSet>, _: &[CandidateText]) -> Result<Vec<f64>, BackendError> {
        Err(BackendError::Unsupported("pointwise"))
    }

    fn rank_chunk(&self, _: &str, products: &[CandidateText]) -> Result<Vec<ChunkPick>, BackendError> {
        let mut picks: Vec<ChunkPick> = products
            .iter()
            .map(|p| ChunkPick {
                doc_id: p.doc_id.clone(),
                score: self.score[&p.doc_id],
            })
            .collect();
        picks.sort_by_key(|p| std::cmp::Reverse(p.score));
        picks.truncate(2);
        Ok(picks)
    }
}

fn listwise_structure() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let products = ProductStore::from_products((0..50).map(|i| hintrank::corpus::Product {
        id: format!("c{i:02}"),
        title: format!("item {i}"),
        description: "thing".into(),
        parent_category: "x".into(),
        sub_category: "y".into(),
        brand: None,
    }))
    .map_err(|e| e.to_string())?;
    let q = SuperlativeQuery {
        id: "q".into(),
        text: "best thing".into(),
        parent_category: "x".into(),
        sub_category: "y".into(),
    };
    for run in 0..500 {
        let n = if run % 5 == 0 { 50 } else { rng.gen_range(1..=50) };
        let mut ids: Vec<String> = (0..50).map(|i| format!("c{i:02}")).collect();
        ids.shuffle(&mut rng);
        ids.truncate(n);
        let candidates = RankedList {
            query_id: "q".into(),
            entries: ids
                .iter()
                .enumerate()
                .map(|(i, d)| ScoredDoc::new(d.clone(), (n - i) as f64))
                .collect(),
        };
        // distinct global relevance, pushed through a random increasing map into 0..=100
        let mut relevance: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        relevance
            .iter_mut()
            .enumerate()
            .for_each(|(i, r)| *r += i as f64 * 1e-9);
        let mut levels: Vec<u8> = (0..=100)
            .collect::<Vec<u8>>()
            .choose_multiple(&mut rng, n)
            .copied()
            .collect();
        levels.sort_unstable();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| relevance[a].total_cmp(&relevance[b]));
        let mut score = HashMap::new();
        for (rank, &i) in order.iter().enumerate() {
            score.insert(ids[i].clone(), levels[rank]);
        }
        let strategy = if run % 2 == 0 {
            ChunkStrategy::Contiguous
        } else {
            ChunkStrategy::Strided
        };
        let backend = MonotoneBackend { score: score.clone() };
        let out =
            listwise_rerank(&q, &candidates, &products, &backend, strategy).map_err(|e| format!("run {run}: {e}"))?;

        let chunks = chunk_positions(n, strategy);
        ensure!(
            out.chunks == n.div_ceil(10) && chunks.len() == out.chunks,
            "run {run}: {} chunks for n={n}",
            out.chunks
        );
        let want_finalists: usize = chunks.iter().map(|c| c.len().min(2)).sum();
        ensure!(
            out.finalists.len() == want_finalists,
            "run {run}: {} finalists",
            out.finalists.len()
        );
        if n == 50 {
            ensure!(
                out.chunks == 5 && out.finalists.len() == 10,
                "run {run}: n=50 gave {} chunks",
                out.chunks
            );
        }
        // exhaustive oracle: per-chunk top-2 under the global order, then globally ordered
        let mut oracle: Vec<&String> = chunks
            .iter()
            .flat_map(|c| {
                let mut c: Vec<&String> = c.iter().map(|&i| &ids[i]).collect();
                c.sort_by(|a, b| score[*b].cmp(&score[*a]));
                c.into_iter().take(2)
            })
            .collect();
        oracle.sort_by(|a, b| score[*b].cmp(&score[*a]));
        let got: Vec<&String> = out.finalists.iter().map(|p| &p.doc_id).collect();
        ensure!(got == oracle, "run {run}: finalists {got:?} vs global order {oracle:?}");
        let head: Vec<&str> = out
            .ranked
            .entries
            .iter()
            .take(got.len())
            .map(|e| e.doc_id.as_str())
            .collect();
        ensure!(
            head == got.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
            "run {run}: finalists do not head output"
        );
        let all: BTreeSet<&str> = out.ranked.entries.iter().map(|e| e.doc_id.as_str()).collect();
        ensure!(
            all.len() == n && out.ranked.len() == n,
            "run {run}: output is not a permutation"
        );
    }
    Ok("n=50 gives 5 chunks/10 finalists; 500 monotone runs consistent".into())
}

// ---------------------------------------------------------------------------
// hint benefit

fn hint_benefit() -> Outcome {
    let start = Instant::now();
    let w = synth_world(&SynthConfig::default());
    ensure!(
        w.products.len() == 500 && w.queries.len() == 20,
        "synthetic world has the wrong size"
    );
    let provider: Arc<dyn TextProvider> = Arc::new(MockProvider::with_scripted_hints(
        7,
        w.hints.iter().map(|(q, h)| (q.text.clone(), h.clone())),
    ));
    let report = |retriever, hints: bool| -> Result<hintrank::eval::MetricReport, String> {
        let mut cfg = PipelineConfig::default();
        cfg.pipeline.retriever = retriever;
        cfg.pipeline.reranker = RerankerKind::Pointwise;
        cfg.hints.enabled = hints;
        let p = Pipeline::builder(offline_config(cfg))
            .products(w.products.clone())
            .provider(provider.clone())
            .build()
            .map_err(|e| e.to_string())?;
        let art = p.run(&w.queries);
        ensure!(art.failures.is_empty(), "failures: {:?}", art.failures);
        evaluate_run(
            &art.rankings(),
            &w.judgments,
            &PositiveSetConfig::default(),
            DEFAULT_DEPTH,
        )
        .map_err(|e| e.to_string())
    };
    let plain = report(RetrieverKind::Bm25, false)?;
    let hinted = report(RetrieverKind::QeBm25, true)?;
    let secs = start.elapsed().as_secs_f64();
    let summary = format!(
        "MRR {:.2} -> {:.2}, MAP {:.2} -> {:.2} in {secs:.2}s",
        plain.mrr * 100.0,
        hinted.mrr * 100.0,
        plain.map_score * 100.0,
        hinted.map_score * 100.0
    );
    ensure!(
        hinted.mrr > plain.mrr && hinted.map_score > plain.map_score,
        "no lift: {summary}"
    );
    ensure!(secs < 30.0, "too slow: {summary}");
    Ok(summary)
}

// ---------------------------------------------------------------------------
// latency

fn latency_harness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for i in 0..2000 {
        let mut xs: Vec<f64> = (0..rng.gen_range(1..60))
            .map(|_| (rng.gen_range(0..40) as f64) / 8.0)
            .collect();
        let stats = latency_stats(&xs).map_err(|e| e.to_string())?;
        xs.sort_by(f64::total_cmp);
        for p in [5u32, 50, 95, 100] {
            // order statistic: smallest value with at least p% of samples at or below it
            let want = *xs
                .iter()
                .find(|v| xs.iter().filter(|x| x <= v).count() * 100 >= p as usize * xs.len())
                .unwrap();
            ensure!(percentile_nearest_rank(&xs, p) == want, "sample {i}: p{p}");
        }
        ensure!(
            stats.p5 == percentile_nearest_rank(&xs, 5) && stats.p95 == percentile_nearest_rank(&xs, 95),
            "sample {i}: stats"
        );
    }

    let w = synth_world(&SynthConfig {
        n_queries: 6,
        ..SynthConfig::default()
    });
    let mut cfg = PipelineConfig::default();
    cfg.pipeline.retriever = RetrieverKind::Bm25;
    cfg.pipeline.reranker = RerankerKind::Pointwise;
    cfg.pipeline.worker_count = 1;
    let slow: Arc<dyn TextProvider> = Arc::new(Delayed::new(MockProvider::new(5), Duration::from_millis(100)));
    let p = Pipeline::builder(offline_config(cfg))
        .products(w.products.clone())
        .provider(slow)
        .retrieval_delay(Duration::from_millis(100))
        .build()
        .map_err(|e| e.to_string())?;
    let art = p.run(&w.queries);
    ensure!(art.failures.is_empty(), "failures: {:?}", art.failures);
    let worst = art.runs.iter().map(|r| r.latency.seconds).fold(0.0, f64::max);
    for r in &art.runs {
        ensure!(
            r.latency.is_consistent(),
            "{}: stage times exceed total",
            r.latency.query_id
        );
        ensure!(
            r.latency.seconds < 0.170,
            "{}: total {:.3}s",
            r.latency.query_id,
            r.latency.seconds
        );
    }
    Ok(format!(
        "percentiles match on 2000 samples; worst total {:.1} ms with 100+100 ms delays",
        worst * 1000.0
    ))
}

fn offline_only() -> Outcome {
    let cfgs = CONFIGS.lock().unwrap();
    ensure!(!cfgs.is_empty(), "no pipeline was built");
    for c in cfgs.iter() {
        ensure!(
            c.hints.provider.kind == ProviderKind::Mock,
            "a run used a remote provider"
        );
        ensure!(
            c.pipeline.scorer == ScorerKind::Lexical && c.rerank.endpoint.is_none(),
            "a run used a remote scorer"
        );
    }
    Ok(format!(
        "{} pipelines, all mock provider and lexical scorer",
        cfgs.len()
    ))
}

fn main() {
    let checks: [(&str, Check); 10] = [
        ("qe_bm25_oracle_equivalence", qe_oracle_equivalence),
        ("single_variant_degeneracy", single_variant_degeneracy),
        ("metric_oracles_and_golden_report", metric_oracles),
        ("coverage_shape", coverage_shape),
        ("hint_parsing", hint_parsing),
        ("pointwise_input_format", pointwise_format),
        ("listwise_structure", listwise_structure),
        ("hint_benefit", hint_benefit),
        ("latency_harness", latency_harness),
        ("offline_only", offline_only),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let outcome = catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("{} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
