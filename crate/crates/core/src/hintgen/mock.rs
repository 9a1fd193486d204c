//! Deterministic offline stand-in for a text-generation model.
//!
//! The mock recognizes which of the four templates produced a prompt and
//! answers in that template's output format. Output depends only on the seed
//! and the prompt text. Hint replies for specific queries can be scripted,
//! which lets synthetic corpora carry their own "world knowledge".

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::cache::normalize_query;
use super::provider::{ProviderError, TextProvider};
use crate::hints::literal::write_string;
use crate::hints::{serialize_hintset, HintSet};
use crate::index::tokenize;

const SUPERLATIVES: &[&str] = &[
    "best", "top", "most", "popular", "leading", "famous", "highest", "rated", "greatest", "finest", "selling",
];

const QUERY_PREFIXES: &[&str] = &[
    "best",
    "top",
    "most popular",
    "leading",
    "highest rated",
    "famous",
    "best selling",
    "top rated",
];

const QUERY_SUFFIXES: &[&str] = &[
    "",
    "for kids",
    "for travel",
    "for home",
    "for beginners",
    "under 50",
    "for gifts",
    "for everyday use",
    "for professionals",
    "on a budget",
];

const FEATURE_VOCAB: &[(&str, &str, &[&str])] = &[
    ("durable", "physical", &["long lasting", "sturdy", "heavy duty"]),
    ("lightweight", "physical", &["ultralight", "portable", "light"]),
    (
        "high quality",
        "performance",
        &["premium", "professional grade", "superior"],
    ),
    ("easy to use", "convenience", &["user friendly", "simple", "intuitive"]),
    ("comfortable", "convenience", &["ergonomic", "cushioned", "soft"]),
    ("stylish", "aesthetic", &["elegant", "modern design", "attractive"]),
    ("reliable", "performance", &["dependable", "consistent", "trusted"]),
    (
        "good value",
        "price",
        &["affordable", "budget friendly", "cost effective"],
    ),
    (
        "waterproof",
        "physical",
        &["water resistant", "weatherproof", "splash proof"],
    ),
    (
        "versatile",
        "convenience",
        &["multi purpose", "all in one", "adaptable"],
    ),
];

const BRAND_SYLLABLES: &[&str] = &[
    "ar", "bel", "cor", "dan", "el", "fen", "gar", "hol", "ix", "jun", "kor", "lum", "mar", "nov", "or", "pel", "quin",
    "ros", "sol", "tor", "ul", "ven", "wex", "zan",
];

pub struct MockProvider {
    seed: u64,
    scripted_hints: HashMap<String, HintSet>,
}

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            scripted_hints: HashMap::new(),
        }
    }

    /// Answers hint prompts for these queries with the given hint sets.
    pub fn with_scripted_hints(seed: u64, hints: impl IntoIterator<Item = (String, HintSet)>) -> Self {
        Self {
            seed,
            scripted_hints: hints.into_iter().map(|(q, h)| (normalize_query(&q), h)).collect(),
        }
    }

    fn rng(&self, prompt: &str) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(prompt.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest[..32]);
        ChaCha8Rng::from_seed(seed)
    }
}

impl TextProvider for MockProvider {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        let mut rng = self.rng(prompt);
        if prompt.starts_with("# Brand and Feature Extraction") {
            let query = between(prompt, "## Query\n", "\n\nYour output: ").unwrap_or("");
            let n = between(prompt, "Generate exactly ", " feature coverage")
                .and_then(|s| s.parse().ok())
                .unwrap_or(10);
            if let Some(h) = self.scripted_hints.get(&normalize_query(query)) {
                return Ok(serialize_hintset(h));
            }
            return Ok(mock_hints(query, n, &mut rng));
        }
        if prompt.starts_with("You are an e-commerce search expert. Generate ") {
            let n: usize = between(prompt, "Generate ", " distinct")
                .and_then(|s| s.parse().ok())
                .unwrap_or(1);
            let noun = between(prompt, "search queries for ", " as found").unwrap_or("products");
            return Ok(mock_queries(noun, n, &mut rng));
        }
        if prompt.contains("## Relevance Categories") {
            let input = between(prompt, "## Input\n", "\n\n## Output").unwrap_or("");
            return Ok(mock_annotations(input, &mut rng));
        }
        if prompt.contains("Return the **2 most relevant products**") {
            let query = between(prompt, "Query: ", "\n").unwrap_or("");
            let products = between(prompt, "Products:\n", "\n\nOUTPUT FORMAT").unwrap_or("");
            return Ok(mock_chunk(query, products, &mut rng));
        }
        Ok("I'm not sure how to help with that request.".into())
    }
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let i = text.find(start)? + start.len();
    let j = text[i..].find(end)?;
    Some(&text[i..i + j])
}

/// Query tokens with superlative words removed.
fn core_terms(query: &str) -> Vec<String> {
    let terms: Vec<String> = tokenize(query)
        .into_iter()
        .filter(|t| !SUPERLATIVES.contains(&t.as_str()))
        .collect();
    if terms.is_empty() {
        vec!["products".into()]
    } else {
        terms
    }
}

fn brand_name(rng: &mut ChaCha8Rng) -> String {
    let a = BRAND_SYLLABLES.choose(rng).unwrap();
    let b = BRAND_SYLLABLES.choose(rng).unwrap();
    let mut name = format!("{a}{b}");
    name[..1].make_ascii_uppercase();
    name
}

fn mock_hints(query: &str, n: usize, rng: &mut ChaCha8Rng) -> String {
    let core = core_terms(query).join(" ");
    let n_brands = rng.gen_range(5..=8);
    let mut brands: Vec<String> = Vec::new();
    while brands.len() < n_brands {
        let b = brand_name(rng);
        if !brands.contains(&b) {
            brands.push(b);
        }
    }
    let n_features = rng.gen_range(5..=7);
    let mut features: Vec<_> = FEATURE_VOCAB.choose_multiple(rng, n_features).collect();
    features.shuffle(rng);

    let mut out =
        String::from("Let me think about what makes these products stand out.\n\n<analysis>\n{\n    \"domain\": ");
    write_string(&mut out, &core);
    out.push_str(",\n    'ranking_intent': ");
    write_string(
        &mut out,
        &format!("Shoppers want {core} that excel in quality and reputation"),
    );
    out.push_str(",\n    \"query_clarification\": \"None\"\n}\n</analysis>\n\n<brands>\n[\n");
    let mut conf: u8 = rng.gen_range(88..=97);
    for b in &brands {
        out.push_str("    {\"name\": ");
        write_string(&mut out, b);
        out.push_str(&format!(", \"confidence\": {conf}}},\n"));
        conf = conf.saturating_sub(rng.gen_range(2..=7)).max(30);
    }
    out.push_str("    # Include 5-10 brands total\n]\n</brands>\n\n<features>\n[\n");
    let mut importance: i64 = 10;
    for (name, category, synonyms) in &features {
        out.push_str("    {\n        \"name\": ");
        write_string(&mut out, name);
        out.push_str(",\n        \"synonyms\": [");
        for (i, s) in synonyms.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            write_string(&mut out, s);
        }
        out.push_str("],\n        \"category\": ");
        write_string(&mut out, category);
        out.push_str(&format!(
            ",\n        \"importance\": {importance},\n        \"brands_known_for\": ["
        ));
        let known = brands.choose(rng).unwrap();
        write_string(&mut out, known);
        out.push_str("]\n    },\n");
        importance = (importance - rng.gen_range(0..=2)).max(1);
    }
    out.push_str("]\n</features>\n\n<feature_coverage_queries>\n[\n");
    for i in 0..n {
        let words: Vec<&str> = features
            .iter()
            .map(
                |(name, _, syns)| {
                    if i == 0 {
                        *name
                    } else {
                        syns[(i - 1) % syns.len()]
                    }
                },
            )
            .collect();
        out.push_str("    ");
        write_string(&mut out, &format!("{} {core}", words.join(" ")));
        out.push_str(",\n");
    }
    out.push_str("]\n</feature_coverage_queries>\n");
    out
}

fn mock_queries(noun: &str, n: usize, rng: &mut ChaCha8Rng) -> String {
    let noun = noun.to_lowercase();
    let mut combos: Vec<(usize, usize)> = (0..QUERY_PREFIXES.len())
        .flat_map(|p| (0..QUERY_SUFFIXES.len()).map(move |s| (p, s)))
        .collect();
    combos.shuffle(rng);
    let mut out = String::from("[\n");
    for i in 0..n {
        let (p, s) = combos[i % combos.len()];
        let q = format!("{} {noun} {}", QUERY_PREFIXES[p], QUERY_SUFFIXES[s]);
        out.push_str("    ");
        write_string(&mut out, q.trim());
        out.push_str(",\n");
    }
    out.push(']');
    out
}

/// Reads the `Query:` / `Product:` lines of an annotation input block.
fn annotation_pairs(input: &str) -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    let mut query = None;
    for line in input.lines() {
        if let Some(q) = line.strip_prefix("Query: ") {
            query = Some(q.to_string());
        } else if let Some(p) = line.strip_prefix("Product: ") {
            pairs.push((query.take().unwrap_or_default(), p.to_string()));
        }
    }
    pairs
}

fn overlap(query: &str, text: &str) -> f64 {
    let core = core_terms(query);
    let toks: std::collections::HashSet<String> = tokenize(text).into_iter().collect();
    core.iter().filter(|t| toks.contains(*t)).count() as f64 / core.len() as f64
}

fn mock_annotations(input: &str, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::from("[\n");
    for (query, product) in annotation_pairs(input) {
        let ov = overlap(&query, &product);
        let (label, reason) = if ov == 0.0 {
            ("irrelevant", "The product does not match the requested category.")
        } else if ov >= 0.999 && rng.gen_bool(0.25) {
            (
                "relevant and best",
                "The product matches and stands out on the implied criteria.",
            )
        } else {
            ("relevant but not best", "The product matches but does not stand out.")
        };
        out.push_str("    {\"reasoning\": ");
        write_string(&mut out, reason);
        out.push_str(", \"label\": ");
        write_string(&mut out, label);
        out.push_str(&format!(", \"confidence\": {}}},\n", rng.gen_range(55..=95)));
    }
    out.push(']');
    out
}

fn mock_chunk(query: &str, products: &str, rng: &mut ChaCha8Rng) -> String {
    let mut scored: Vec<(String, i64)> = products
        .lines()
        .filter_map(|l| l.split_once(": "))
        .map(|(id, text)| {
            let base = (overlap(query, text) * 80.0).round() as i64;
            (id.to_string(), (base + rng.gen_range(1..=18)).min(99))
        })
        .collect();
    scored.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(2);
    let mut out = String::from("<think>Comparing the listed products against the query.</think>\n{\n");
    for (id, score) in &scored {
        out.push_str("    ");
        write_string(&mut out, id);
        out.push_str(&format!(": {score},\n"));
    }
    out.push('}');
    out
}
