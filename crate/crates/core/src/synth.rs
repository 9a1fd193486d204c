//! A small deterministic product world with known answers.
//!
//! Each query is `best <noun>`. For every noun there are a few truly best
//! products, described with feature synonyms and made by the top brands, a
//! few decoys that merely repeat "best", and ordinary matches. The matching
//! hint set names exactly those features and brands, so a ranker that reads
//! hints can find the best products and one that reads only the query text
//! is drawn to the decoys.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{EmbeddingStore, JudgmentSet, Label, Product, ProductStore, RelevanceJudgment, SuperlativeQuery};
use crate::hints::{Analysis, BrandHint, FeatureHint, HintSet, DEFAULT_COVERAGE_QUERIES};

pub const MAX_SYNTH_QUERIES: usize = 20;

const NOUNS: [(&str, &str); MAX_SYNTH_QUERIES] = [
    ("tent", "Sports"),
    ("backpack", "Sports"),
    ("sleeping bag", "Sports"),
    ("kayak", "Sports"),
    ("bicycle helmet", "Sports"),
    ("kettle", "Home"),
    ("blender", "Home"),
    ("toaster", "Home"),
    ("vacuum", "Home"),
    ("desk lamp", "Home"),
    ("headphones", "Electronics"),
    ("smartwatch", "Electronics"),
    ("keyboard", "Electronics"),
    ("webcam", "Electronics"),
    ("speaker", "Electronics"),
    ("balloons", "Toys"),
    ("puzzle", "Toys"),
    ("kite", "Toys"),
    ("board game", "Toys"),
    ("yo yo", "Toys"),
];

const FEATURES: [(&str, [&str; 3]); 10] = [
    ("durable", ["sturdy", "rugged", "tough"]),
    ("lightweight", ["featherweight", "ultralight", "airy"]),
    ("waterproof", ["watertight", "rainproof", "sealed"]),
    ("quiet", ["hushed", "silent", "noiseless"]),
    ("compact", ["foldable", "collapsible", "slim"]),
    ("premium", ["luxurious", "deluxe", "upscale"]),
    ("ergonomic", ["contoured", "comfortable", "cushioned"]),
    ("efficient", ["economical", "frugal", "thrifty"]),
    ("versatile", ["adaptable", "flexible", "multipurpose"]),
    ("reliable", ["dependable", "trustworthy", "steadfast"]),
];

const FILLER: [&str; 16] = [
    "classic", "design", "model", "edition", "series", "color", "standard", "item", "everyday", "basic", "simple",
    "value", "choice", "option", "style", "version",
];

const SYLLABLES: [&str; 16] = [
    "zor", "vex", "qua", "lum", "bri", "tal", "nox", "kel", "dra", "pim", "sav", "ulo", "fen", "gry", "hav", "jin",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_queries: usize,
    pub docs_per_query: usize,
    pub best_per_query: usize,
    pub decoys_per_query: usize,
    pub embedding_dim: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_queries: 20,
            docs_per_query: 25,
            best_per_query: 3,
            decoys_per_query: 4,
            embedding_dim: 16,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub products: ProductStore,
    pub queries: Vec<SuperlativeQuery>,
    pub judgments: JudgmentSet,
    /// The hint set each query "should" get, keyed by query id order.
    pub hints: Vec<(SuperlativeQuery, HintSet)>,
    pub embeddings: EmbeddingStore,
    pub query_embeddings: EmbeddingStore,
}

fn brand(rng: &mut ChaCha8Rng) -> String {
    let mut name: String = (0..2).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
    name[..1].make_ascii_uppercase();
    name
}

fn filler(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n)
        .map(|_| *FILLER.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Builds the world. Panics if the config asks for more queries than nouns or
/// for more special docs than docs.
pub fn synth_world(cfg: &SynthConfig) -> SynthWorld {
    assert!(cfg.n_queries <= NOUNS.len(), "at most {} queries", NOUNS.len());
    assert!(cfg.best_per_query + cfg.decoys_per_query <= cfg.docs_per_query);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut products = Vec::new();
    let mut queries = Vec::new();
    let mut hints = Vec::new();
    let mut per_query_docs: Vec<Vec<(String, Label)>> = Vec::new();
    let mut centroids: Vec<Vec<f64>> = Vec::new();
    let mut used_brands = std::collections::HashSet::new();

    for (qi, (noun, parent)) in NOUNS.iter().take(cfg.n_queries).enumerate() {
        let query = SuperlativeQuery {
            id: format!("q{qi:03}"),
            text: format!("best {noun}"),
            parent_category: parent.to_string(),
            sub_category: noun.to_string(),
        };
        let mut brands = Vec::new();
        while brands.len() < 6 {
            let b = brand(&mut rng);
            if used_brands.insert(b.clone()) {
                brands.push(b);
            }
        }
        let mut feats: Vec<_> = FEATURES.iter().collect();
        feats.shuffle(&mut rng);
        feats.truncate(5);

        let hint = HintSet {
            analysis: Analysis {
                domain: format!("{parent} > {noun}"),
                ranking_intent: format!("shoppers want a {noun} that excels in quality"),
                query_clarification: "none".into(),
            },
            brands: brands
                .iter()
                .enumerate()
                .map(|(i, b)| BrandHint {
                    name: b.clone(),
                    confidence: 95 - 7 * i as u8,
                })
                .collect(),
            features: feats
                .iter()
                .enumerate()
                .map(|(i, (name, syns))| FeatureHint {
                    name: name.to_string(),
                    synonyms: syns.iter().map(|s| s.to_string()).collect(),
                    category: "performance".into(),
                    importance: 10 - i as u8,
                    brands_known_for: vec![brands[i % 3].clone()],
                })
                .collect(),
            coverage_queries: (0..DEFAULT_COVERAGE_QUERIES)
                .map(|j| {
                    // a different synonym mix per query; the last one uses the plain names
                    let words: Vec<&str> = feats
                        .iter()
                        .enumerate()
                        .map(|(f, (name, syns))| if j == 9 { *name } else { syns[(j + f * (j / 3)) % 3] })
                        .collect();
                    format!("{} {noun}", words.join(" "))
                })
                .collect(),
        };

        let centroid: Vec<f64> = (0..cfg.embedding_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut docs = Vec::new();
        for d in 0..cfg.docs_per_query {
            // ids are shuffled so tie-breaking by id carries no signal
            let id = format!("p{:05}{qi:02}{d:02}", rng.gen_range(0..100_000u32));
            let (title, description, label, maker) = if d < cfg.best_per_query {
                let syns: Vec<&str> = feats.iter().map(|(_, s)| *s.choose(&mut rng).unwrap()).collect();
                let b = brands[d % 3].clone();
                (
                    format!("{b} {noun} {}", syns[0]),
                    format!("{} {noun} {}", syns[1..].join(" "), filler(&mut rng, 3)),
                    Label::RelevantAndBest,
                    b,
                )
            } else if d < cfg.best_per_query + cfg.decoys_per_query {
                let b = brand(&mut rng);
                (
                    format!("best {noun} {b}"),
                    format!("the best {noun} best price {}", filler(&mut rng, 4)),
                    Label::RelevantNotBest,
                    b,
                )
            } else {
                let b = brands[3 + d % 3].clone();
                (
                    format!("{b} {noun} {}", filler(&mut rng, 2)),
                    format!("{noun} {}", filler(&mut rng, 5)),
                    Label::RelevantNotBest,
                    b,
                )
            };
            let v: Vec<f64> = centroid
                .iter()
                .map(|c| c + rng.gen_range(-0.6..0.6) + if label == Label::RelevantAndBest { 0.3 * c } else { 0.0 })
                .collect();
            products.push((
                Product {
                    id: id.clone(),
                    title,
                    description,
                    parent_category: parent.to_string(),
                    sub_category: noun.to_string(),
                    brand: Some(maker),
                },
                v,
            ));
            docs.push((id, label));
        }
        centroids.push(centroid);
        per_query_docs.push(docs);
        queries.push(query.clone());
        hints.push((query, hint));
    }

    // fill every query to 50 judged pairs with other nouns' docs
    let all_ids: Vec<String> = products.iter().map(|(p, _)| p.id.clone()).collect();
    let mut judgments = Vec::new();
    for (q, docs) in queries.iter().zip(&per_query_docs) {
        let own: std::collections::HashSet<&String> = docs.iter().map(|(id, _)| id).collect();
        for (id, label) in docs {
            judgments.push(RelevanceJudgment {
                query_id: q.id.clone(),
                product_id: id.clone(),
                label: *label,
                confidence: 90,
                reasoning: None,
            });
        }
        let others: Vec<&String> = all_ids.iter().filter(|id| !own.contains(id)).collect();
        for id in others.choose_multiple(&mut rng, 50usize.saturating_sub(docs.len())) {
            judgments.push(RelevanceJudgment {
                query_id: q.id.clone(),
                product_id: (*id).clone(),
                label: Label::Irrelevant,
                confidence: 85,
                reasoning: None,
            });
        }
    }

    let mut embeddings = EmbeddingStore::new(cfg.embedding_dim);
    for (p, v) in &products {
        embeddings.insert(p.id.clone(), v).expect("dimension fixed above");
    }
    let mut query_embeddings = EmbeddingStore::new(cfg.embedding_dim);
    for (q, c) in queries.iter().zip(&centroids) {
        query_embeddings.insert(q.id.clone(), c).expect("dimension fixed above");
    }

    SynthWorld {
        products: ProductStore::from_products(products.into_iter().map(|(p, _)| p)).expect("ids are unique"),
        queries,
        judgments: JudgmentSet::new(judgments),
        hints,
        embeddings,
        query_embeddings,
    }
}
