//! Product catalog, query set, relevance judgments and precomputed embeddings.
//!
//! All record files are line-delimited JSON objects with named fields. Blank
//! lines are ignored; every other line must hold exactly one record.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::index::tokenize;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("unknown relevance label {0:?}")]
    UnknownLabel(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("embedding dimension mismatch at line {line}: expected {expected}, got {got}")]
    DimMismatch { line: usize, expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

fn malformed(line: usize, reason: impl Into<String>) -> CorpusError {
    CorpusError::MalformedRecord {
        line,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Product {
    pub id: String,
    pub title: String,
    pub description: String,
    pub parent_category: String,
    pub sub_category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brand: Option<String>,
}

impl Product {
    /// Title and description joined by a single space.
    pub fn text(&self) -> String {
        format!("{} {}", self.title, self.description)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuperlativeQuery {
    pub id: String,
    pub text: String,
    pub parent_category: String,
    pub sub_category: String,
}

/// The three-way relevance label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    RelevantAndBest,
    RelevantNotBest,
    Irrelevant,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::RelevantAndBest, Label::RelevantNotBest, Label::Irrelevant];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::RelevantAndBest => "relevant and best",
            Label::RelevantNotBest => "relevant but not best",
            Label::Irrelevant => "irrelevant",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| CorpusError::UnknownLabel(s.to_string()))
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RelevanceJudgment {
    pub query_id: String,
    pub product_id: String,
    pub label: Label,
    pub confidence: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
}

// Labels are parsed by hand so an unknown label surfaces as `UnknownLabel`
// rather than a generic record error.
#[derive(Deserialize)]
struct RawJudgment {
    query_id: String,
    product_id: String,
    label: String,
    confidence: i64,
    #[serde(default)]
    reasoning: Option<String>,
}

/// Products keyed by id. Lookup is order independent; iteration follows
/// insertion order so that serialization reproduces the source file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProductStore {
    products: Vec<Product>,
    by_id: HashMap<String, usize>,
}

impl ProductStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_products(products: impl IntoIterator<Item = Product>) -> Result<Self> {
        let mut store = Self::new();
        for p in products {
            store.insert(p)?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, product: Product) -> Result<()> {
        if self.by_id.contains_key(&product.id) {
            return Err(CorpusError::DuplicateId(product.id));
        }
        self.by_id.insert(product.id.clone(), self.products.len());
        self.products.push(product);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Product> {
        self.by_id.get(id).map(|&i| &self.products[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Product> {
        self.products.iter()
    }
}

fn check_product(line: usize, p: &Product) -> Result<()> {
    if p.id.is_empty() {
        return Err(malformed(line, "empty product id"));
    }
    if p.title.is_empty() {
        return Err(malformed(line, "empty product title"));
    }
    Ok(())
}

fn check_query(line: usize, q: &SuperlativeQuery) -> Result<()> {
    if q.id.is_empty() {
        return Err(malformed(line, "empty query id"));
    }
    if tokenize(&q.text).is_empty() {
        return Err(malformed(line, "query text has no tokens"));
    }
    Ok(())
}

/// Iterates `(line_no, line)` over non-blank lines, 1-based.
fn records<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader.lines().enumerate().filter_map(|(i, line)| match line {
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(Ok((i + 1, l))),
        Err(e) => Some(Err(CorpusError::Io(e))),
    })
}

fn parse_record<T: for<'de> Deserialize<'de>>(line_no: usize, line: &str) -> Result<T> {
    serde_json::from_str(line).map_err(|e| malformed(line_no, e.to_string()))
}

pub fn read_products<R: BufRead>(reader: R) -> Result<ProductStore> {
    let mut store = ProductStore::new();
    for rec in records(reader) {
        let (line_no, line) = rec?;
        let p: Product = parse_record(line_no, &line)?;
        check_product(line_no, &p)?;
        store.insert(p)?;
    }
    Ok(store)
}

pub fn load_products(path: impl AsRef<Path>) -> Result<ProductStore> {
    read_products(BufReader::new(File::open(path)?))
}

pub fn write_products<W: Write>(store: &ProductStore, mut out: W) -> Result<()> {
    for p in store.iter() {
        serde_json::to_writer(&mut out, p).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_products(store: &ProductStore, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_products(store, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn read_queries<R: BufRead>(reader: R) -> Result<Vec<SuperlativeQuery>> {
    let mut seen = HashSet::new();
    let mut queries = Vec::new();
    for rec in records(reader) {
        let (line_no, line) = rec?;
        let q: SuperlativeQuery = parse_record(line_no, &line)?;
        check_query(line_no, &q)?;
        if !seen.insert(q.id.clone()) {
            return Err(CorpusError::DuplicateId(q.id));
        }
        queries.push(q);
    }
    Ok(queries)
}

pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<SuperlativeQuery>> {
    read_queries(BufReader::new(File::open(path)?))
}

pub fn write_queries<W: Write>(queries: &[SuperlativeQuery], mut out: W) -> Result<()> {
    for q in queries {
        serde_json::to_writer(&mut out, q).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_queries(queries: &[SuperlativeQuery], path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_queries(queries, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Judgments in file order, grouped by query id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JudgmentSet {
    judgments: Vec<RelevanceJudgment>,
    by_query: BTreeMap<String, Vec<usize>>,
}

impl JudgmentSet {
    pub fn new(judgments: Vec<RelevanceJudgment>) -> Self {
        let mut by_query: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, j) in judgments.iter().enumerate() {
            by_query.entry(j.query_id.clone()).or_default().push(i);
        }
        Self { judgments, by_query }
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &RelevanceJudgment> {
        self.judgments.iter()
    }

    /// Query ids in ascending order.
    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.by_query.keys().map(String::as_str)
    }

    pub fn num_queries(&self) -> usize {
        self.by_query.len()
    }

    pub fn contains_query(&self, query_id: &str) -> bool {
        self.by_query.contains_key(query_id)
    }

    pub fn for_query(&self, query_id: &str) -> impl Iterator<Item = &RelevanceJudgment> {
        self.by_query
            .get(query_id)
            .into_iter()
            .flatten()
            .map(|&i| &self.judgments[i])
    }

    pub fn pair_count(&self, query_id: &str) -> usize {
        self.by_query.get(query_id).map_or(0, Vec::len)
    }

    /// Ids of products judged with one of `labels` for the query.
    pub fn positives(&self, query_id: &str, labels: &BTreeSet<Label>) -> HashSet<String> {
        self.for_query(query_id)
            .filter(|j| labels.contains(&j.label))
            .map(|j| j.product_id.clone())
            .collect()
    }

    pub fn count_label(&self, query_id: &str, label: Label) -> usize {
        self.for_query(query_id).filter(|j| j.label == label).count()
    }
}

pub fn read_judgments<R: BufRead>(reader: R) -> Result<JudgmentSet> {
    let mut out = Vec::new();
    for rec in records(reader) {
        let (line_no, line) = rec?;
        let raw: RawJudgment = parse_record(line_no, &line)?;
        let label: Label = raw.label.parse()?;
        let confidence = u8::try_from(raw.confidence)
            .ok()
            .filter(|c| *c <= 100)
            .ok_or_else(|| malformed(line_no, format!("confidence {} outside [0,100]", raw.confidence)))?;
        out.push(RelevanceJudgment {
            query_id: raw.query_id,
            product_id: raw.product_id,
            label,
            confidence,
            reasoning: raw.reasoning,
        });
    }
    Ok(JudgmentSet::new(out))
}

pub fn load_judgments(path: impl AsRef<Path>) -> Result<JudgmentSet> {
    read_judgments(BufReader::new(File::open(path)?))
}

pub fn write_judgments<W: Write>(set: &JudgmentSet, mut out: W) -> Result<()> {
    for j in set.iter() {
        serde_json::to_writer(&mut out, j).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_judgments(set: &JudgmentSet, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_judgments(set, &mut out)?;
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub query_ids: BTreeSet<String>,
}

/// Stratum key: positive-label count (capped at 15) and parent category.
fn stratum_key(judgments: &JudgmentSet, categories: &HashMap<String, String>, query_id: &str) -> (usize, String) {
    let bucket = judgments.count_label(query_id, Label::RelevantAndBest).min(15);
    let category = categories.get(query_id).cloned().unwrap_or_default();
    (bucket, category)
}

/// Splits queries into train/dev/test, stratified by the number of
/// `RelevantAndBest` items per query and, when `queries` is given, by parent
/// category.
///
/// Each stratum is shuffled with a seeded RNG and apportioned by largest
/// remainder; fractional shares carry over between strata so global split
/// sizes track the requested ratios.
pub fn stratified_split(
    judgments: &JudgmentSet,
    queries: Option<&[SuperlativeQuery]>,
    ratios: [f64; 3],
    seed: u64,
) -> Result<[DatasetSplit; 3]> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(CorpusError::InvalidRatios(format!(
            "ratios must be finite and nonnegative, got {ratios:?}"
        )));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(CorpusError::InvalidRatios(format!("ratios must sum to 1, got {total}")));
    }
    if judgments.num_queries() == 0 {
        return Err(CorpusError::EmptyDataset);
    }

    let categories: HashMap<String, String> = queries
        .unwrap_or_default()
        .iter()
        .map(|q| (q.id.clone(), q.parent_category.clone()))
        .collect();

    let mut strata: BTreeMap<(usize, String), Vec<&str>> = BTreeMap::new();
    for qid in judgments.query_ids() {
        strata
            .entry(stratum_key(judgments, &categories, qid))
            .or_default()
            .push(qid);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut carry = [0.0f64; 3];
    let mut splits = [BTreeSet::<String>::new(), BTreeSet::new(), BTreeSet::new()];
    for members in strata.values_mut() {
        // query_ids() is sorted, so the shuffle input is deterministic
        members.shuffle(&mut rng);
        let m = members.len();
        let want: Vec<f64> = (0..3).map(|s| ratios[s] * m as f64 + carry[s]).collect();
        let mut counts: Vec<usize> = want.iter().map(|w| w.max(0.0).floor() as usize).collect();
        let mut assigned: usize = counts.iter().sum();
        while assigned > m {
            // only reachable through accumulated negative carry; take from the largest overshoot
            let s = (0..3)
                .filter(|&s| counts[s] > 0)
                .max_by(|&a, &b| {
                    (counts[a] as f64 - want[a])
                        .total_cmp(&(counts[b] as f64 - want[b]))
                        .then(b.cmp(&a))
                })
                .expect("some split has members");
            counts[s] -= 1;
            assigned -= 1;
        }
        while assigned < m {
            let s = (0..3)
                .filter(|&s| ratios[s] > 0.0)
                .max_by(|&a, &b| {
                    (want[a] - counts[a] as f64)
                        .total_cmp(&(want[b] - counts[b] as f64))
                        .then(b.cmp(&a))
                })
                .expect("ratios sum to one");
            counts[s] += 1;
            assigned += 1;
        }
        for s in 0..3 {
            carry[s] = want[s] - counts[s] as f64;
        }
        let mut it = members.iter();
        for (s, &n) in counts.iter().enumerate() {
            splits[s].extend(it.by_ref().take(n).map(|q| q.to_string()));
        }
    }

    let [train, dev, test] = splits;
    Ok([
        DatasetSplit {
            name: SplitName::Train,
            query_ids: train,
        },
        DatasetSplit {
            name: SplitName::Dev,
            query_ids: dev,
        },
        DatasetSplit {
            name: SplitName::Test,
            query_ids: test,
        },
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ViolationKind {
    PairCount,
    UnknownProduct,
    NoRelevant,
    TooManyRelevant,
    UnjudgedQuery,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::PairCount => "pair-count",
            ViolationKind::UnknownProduct => "unknown-product",
            ViolationKind::NoRelevant => "no-relevant",
            ViolationKind::TooManyRelevant => "too-many-relevant",
            ViolationKind::UnjudgedQuery => "unjudged-query",
        }
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub query_id: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationPolicy {
    pub pairs_per_query: usize,
    pub min_relevant: usize,
    pub max_relevant: usize,
    /// Labels counted as "relevant" for the [min, max] filter.
    pub relevant_labels: BTreeSet<Label>,
}

impl Default for ValidationPolicy {
    fn default() -> Self {
        Self {
            pairs_per_query: 50,
            min_relevant: 1,
            max_relevant: 14,
            relevant_labels: BTreeSet::from([Label::RelevantAndBest]),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub n_queries: usize,
    pub n_pairs: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

pub fn validate_dataset(
    store: &ProductStore,
    queries: &[SuperlativeQuery],
    judgments: &JudgmentSet,
    policy: &ValidationPolicy,
) -> ValidationReport {
    let mut report = ValidationReport {
        n_queries: judgments.num_queries(),
        n_pairs: judgments.len(),
        violations: Vec::new(),
    };
    for q in queries {
        if !judgments.contains_query(&q.id) {
            report.violations.push(Violation {
                kind: ViolationKind::UnjudgedQuery,
                query_id: q.id.clone(),
                detail: "query has no judgments".into(),
            });
        }
    }
    for qid in judgments.query_ids() {
        let pairs = judgments.pair_count(qid);
        if pairs != policy.pairs_per_query {
            report.violations.push(Violation {
                kind: ViolationKind::PairCount,
                query_id: qid.to_string(),
                detail: format!("{pairs} judged pairs, expected {}", policy.pairs_per_query),
            });
        }
        let mut relevant = 0;
        for j in judgments.for_query(qid) {
            if !store.contains(&j.product_id) {
                report.violations.push(Violation {
                    kind: ViolationKind::UnknownProduct,
                    query_id: qid.to_string(),
                    detail: format!("product {:?} not in store", j.product_id),
                });
            }
            if policy.relevant_labels.contains(&j.label) {
                relevant += 1;
            }
        }
        if relevant < policy.min_relevant {
            report.violations.push(Violation {
                kind: ViolationKind::NoRelevant,
                query_id: qid.to_string(),
                detail: format!("{relevant} relevant items"),
            });
        } else if relevant > policy.max_relevant {
            report.violations.push(Violation {
                kind: ViolationKind::TooManyRelevant,
                query_id: qid.to_string(),
                detail: format!("{relevant} relevant items, at most {}", policy.max_relevant),
            });
        }
    }
    report
}

/// Precomputed dense vectors keyed by document (or query) id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    by_id: HashMap<String, usize>,
    data: Vec<f64>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            dim,
            ids: Vec::new(),
            by_id: HashMap::new(),
            data: Vec::new(),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: &[f64]) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(CorpusError::DimMismatch {
                line: 0,
                expected: self.dim,
                got: vector.len(),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(malformed(0, format!("non-finite component in vector {id:?}")));
        }
        if self.by_id.contains_key(&id) {
            return Err(CorpusError::DuplicateId(id));
        }
        self.by_id.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.by_id
            .get(id)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids
            .iter()
            .zip(self.data.chunks_exact(self.dim))
            .map(|(id, v)| (id.as_str(), v))
    }
}

pub fn read_embeddings<R: BufRead>(reader: R) -> Result<EmbeddingStore> {
    let mut lines = records(reader);
    let (line_no, header) = match lines.next() {
        Some(r) => r?,
        None => return Err(malformed(1, "missing dimension header")),
    };
    let dim: usize = header
        .trim()
        .parse()
        .ok()
        .filter(|d| *d > 0)
        .ok_or_else(|| malformed(line_no, format!("invalid dimension header {header:?}")))?;
    let mut store = EmbeddingStore::new(dim);
    let mut buf = Vec::with_capacity(dim);
    for rec in lines {
        let (line_no, line) = rec?;
        let mut fields = line.split_whitespace();
        let id = fields.next().expect("non-blank line has a field");
        buf.clear();
        for f in fields {
            let x: f64 = f
                .parse()
                .map_err(|_| malformed(line_no, format!("invalid real {f:?}")))?;
            if !x.is_finite() {
                return Err(malformed(line_no, format!("non-finite component {f:?}")));
            }
            buf.push(x);
        }
        if buf.len() != dim {
            return Err(CorpusError::DimMismatch {
                line: line_no,
                expected: dim,
                got: buf.len(),
            });
        }
        store.insert(id, &buf)?;
    }
    Ok(store)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    read_embeddings(BufReader::new(File::open(path)?))
}

pub fn write_embeddings<W: Write>(store: &EmbeddingStore, mut out: W) -> Result<()> {
    writeln!(out, "{}", store.dim())?;
    for (id, v) in store.iter() {
        out.write_all(id.as_bytes())?;
        for x in v {
            // `{:?}` on f64 prints the shortest representation that round-trips
            write!(out, " {x:?}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_embeddings(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_embeddings(store, &mut out)?;
    out.flush()?;
    Ok(())
}
