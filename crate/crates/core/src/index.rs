//! Tokenization, an in-memory inverted index with Okapi BM25 scoring, and
//! exact cosine top-k over precomputed embeddings.
//!
//! Documents are stored in ascending id order, so an internal document number
//! orders exactly like its id and tie-breaking by id is tie-breaking by number.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingStore, ProductStore};

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("cannot build an index over an empty store")]
    EmptyStore,
    #[error("query has no tokens")]
    EmptyQuery,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("query vector has dimension {got}, store has {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("query vector has zero norm")]
    ZeroVector,
    #[error("invalid index snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = IndexError> = std::result::Result<T, E>;

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

impl ScoredDoc {
    pub fn new(doc_id: impl Into<String>, score: f64) -> Self {
        Self {
            doc_id: doc_id.into(),
            score,
        }
    }
}

/// Descending score, then ascending doc id.
pub fn rank_order(a: &ScoredDoc, b: &ScoredDoc) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldPolicy {
    #[default]
    TitleDescription,
    TitleOnly,
}

impl FieldPolicy {
    fn text(self, p: &crate::corpus::Product) -> String {
        match self {
            FieldPolicy::TitleDescription => p.text(),
            FieldPolicy::TitleOnly => p.title.clone(),
        }
    }

    fn code(self) -> u8 {
        match self {
            FieldPolicy::TitleDescription => 0,
            FieldPolicy::TitleOnly => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(FieldPolicy::TitleDescription),
            1 => Some(FieldPolicy::TitleOnly),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    field_policy: FieldPolicy,
    doc_ids: Vec<String>,
    doc_lens: Vec<u32>,
    avg_doc_len: f64,
    postings: HashMap<String, Vec<Posting>>,
    by_id: HashMap<String, u32>,
}

impl InvertedIndex {
    pub fn build(store: &ProductStore, field_policy: FieldPolicy) -> Result<Self> {
        Self::from_documents(store.iter().map(|p| (p.id.clone(), field_policy.text(p))), field_policy)
    }

    pub fn from_documents(docs: impl IntoIterator<Item = (String, String)>, field_policy: FieldPolicy) -> Result<Self> {
        let mut docs: Vec<(String, Vec<String>)> = docs.into_iter().map(|(id, text)| (id, tokenize(&text))).collect();
        if docs.is_empty() {
            return Err(IndexError::EmptyStore);
        }
        docs.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = docs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(IndexError::InvalidArgument(format!(
                "duplicate document id {:?}",
                w[0].0
            )));
        }

        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
        let mut doc_lens = Vec::with_capacity(docs.len());
        let mut total_len: u64 = 0;
        let mut counts: HashMap<&str, u32> = HashMap::new();
        for (n, (_, tokens)) in docs.iter().enumerate() {
            counts.clear();
            for t in tokens {
                *counts.entry(t.as_str()).or_insert(0) += 1;
            }
            for (term, &tf) in &counts {
                postings
                    .entry(term.to_string())
                    .or_default()
                    .push(Posting { doc: n as u32, tf });
            }
            doc_lens.push(tokens.len() as u32);
            total_len += tokens.len() as u64;
        }
        for list in postings.values_mut() {
            list.sort_by_key(|p| p.doc);
        }
        let avg_doc_len = total_len as f64 / docs.len() as f64;
        let doc_ids: Vec<String> = docs.into_iter().map(|(id, _)| id).collect();
        let by_id = doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        Ok(Self {
            field_policy,
            doc_ids,
            doc_lens,
            avg_doc_len,
            postings,
            by_id,
        })
    }

    pub fn field_policy(&self) -> FieldPolicy {
        self.field_policy
    }

    /// Number of indexed documents.
    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn doc_id(&self, doc: u32) -> &str {
        &self.doc_ids[doc as usize]
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_number(&self, id: &str) -> Option<u32> {
        self.by_id.get(id).copied()
    }

    pub fn doc_len(&self, id: &str) -> Option<u32> {
        self.doc_number(id).map(|n| self.doc_lens[n as usize])
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn num_terms(&self) -> usize {
        self.postings.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    /// Smoothed, nonnegative idf.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count() as f64;
        let df = self.doc_freq(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// BM25 score for every document sharing at least one query token, as
    /// `(doc number, score)` in ascending document order. Repeated query
    /// tokens contribute once per occurrence.
    pub fn score_all(&self, query_tokens: &[String]) -> Vec<(u32, f64)> {
        let mut acc = vec![0.0f64; self.doc_count()];
        let mut hit = vec![false; self.doc_count()];
        let mut touched = Vec::new();
        for term in query_tokens {
            let list = self.postings(term);
            if list.is_empty() {
                continue;
            }
            let idf = self.idf(term);
            for p in list {
                let d = p.doc as usize;
                let tf = p.tf as f64;
                let dl = self.doc_lens[d] as f64;
                acc[d] +=
                    idf * (tf * (BM25_K1 + 1.0)) / (tf + BM25_K1 * (1.0 - BM25_B + BM25_B * dl / self.avg_doc_len));
                if !hit[d] {
                    hit[d] = true;
                    touched.push(p.doc);
                }
            }
        }
        touched.sort_unstable();
        touched.into_iter().map(|d| (d, acc[d as usize])).collect()
    }

    /// Best `n` BM25 hits as `(doc number, score)`, descending score then
    /// ascending doc number.
    pub fn top_hits(&self, query_tokens: &[String], n: usize) -> Vec<(u32, f64)> {
        let mut hits = self.score_all(query_tokens);
        top_n(&mut hits, n);
        hits
    }

    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(SNAPSHOT_MAGIC)?;
        out.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        out.write_all(&[self.field_policy.code()])?;
        write_u64(&mut out, self.doc_ids.len() as u64)?;
        for (id, len) in self.doc_ids.iter().zip(&self.doc_lens) {
            write_str(&mut out, id)?;
            out.write_all(&len.to_le_bytes())?;
        }
        let mut terms: Vec<&String> = self.postings.keys().collect();
        terms.sort();
        write_u64(&mut out, terms.len() as u64)?;
        for term in terms {
            write_str(&mut out, term)?;
            let list = &self.postings[term];
            write_u64(&mut out, list.len() as u64)?;
            for p in list {
                out.write_all(&p.doc.to_le_bytes())?;
                out.write_all(&p.tf.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 6];
        input.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(IndexError::Snapshot("bad magic".into()));
        }
        let version = read_u32(&mut input)?;
        if version != SNAPSHOT_VERSION {
            return Err(IndexError::Snapshot(format!("unsupported version {version}")));
        }
        let mut policy = [0u8; 1];
        input.read_exact(&mut policy)?;
        let field_policy =
            FieldPolicy::from_code(policy[0]).ok_or_else(|| IndexError::Snapshot("unknown field policy".into()))?;
        let n_docs = read_u64(&mut input)? as usize;
        if n_docs == 0 {
            return Err(IndexError::Snapshot("no documents".into()));
        }
        let mut doc_ids = Vec::with_capacity(n_docs.min(1 << 20));
        let mut doc_lens = Vec::with_capacity(n_docs.min(1 << 20));
        let mut total_len = 0u64;
        for _ in 0..n_docs {
            doc_ids.push(read_str(&mut input)?);
            let len = read_u32(&mut input)?;
            total_len += len as u64;
            doc_lens.push(len);
        }
        if doc_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(IndexError::Snapshot("document ids not strictly ascending".into()));
        }
        let n_terms = read_u64(&mut input)? as usize;
        let mut postings = HashMap::with_capacity(n_terms.min(1 << 20));
        for _ in 0..n_terms {
            let term = read_str(&mut input)?;
            let n = read_u64(&mut input)? as usize;
            let mut list = Vec::with_capacity(n.min(1 << 20));
            for _ in 0..n {
                let doc = read_u32(&mut input)?;
                let tf = read_u32(&mut input)?;
                if doc as usize >= n_docs || tf == 0 {
                    return Err(IndexError::Snapshot(format!("bad posting for {term:?}")));
                }
                list.push(Posting { doc, tf });
            }
            postings.insert(term, list);
        }
        let by_id = doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        Ok(Self {
            field_policy,
            avg_doc_len: total_len as f64 / n_docs as f64,
            doc_ids,
            doc_lens,
            postings,
            by_id,
        })
    }
}

const SNAPSHOT_MAGIC: &[u8; 6] = b"HRIDX\0";
const SNAPSHOT_VERSION: u32 = 1;

fn write_u64<W: Write>(out: &mut W, v: u64) -> io::Result<()> {
    out.write_all(&v.to_le_bytes())
}

fn write_str<W: Write>(out: &mut W, s: &str) -> io::Result<()> {
    write_u64(out, s.len() as u64)?;
    out.write_all(s.as_bytes())
}

fn read_u32<R: Read>(input: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(input: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str<R: Read>(input: &mut R) -> Result<String> {
    let len = read_u64(input)?;
    let mut buf = Vec::new();
    input.take(len).read_to_end(&mut buf)?;
    if buf.len() as u64 != len {
        return Err(IndexError::Io(io::ErrorKind::UnexpectedEof.into()));
    }
    String::from_utf8(buf).map_err(|_| IndexError::Snapshot("invalid utf-8".into()))
}

/// Keeps the best `n` entries of `hits`, sorted by descending score then
/// ascending doc number.
pub(crate) fn top_n(hits: &mut Vec<(u32, f64)>, n: usize) {
    let cmp = |a: &(u32, f64), b: &(u32, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if n < hits.len() {
        if n == 0 {
            hits.clear();
            return;
        }
        hits.select_nth_unstable_by(n - 1, cmp);
        hits.truncate(n);
    }
    hits.sort_unstable_by(cmp);
}

pub fn build_index(store: &ProductStore, field_policy: FieldPolicy) -> Result<InvertedIndex> {
    InvertedIndex::build(store, field_policy)
}

/// Top `min(k, max_candidates)` BM25 documents for the query tokens.
pub fn bm25_topk(
    index: &InvertedIndex,
    query_tokens: &[String],
    k: usize,
    max_candidates: usize,
) -> Result<Vec<ScoredDoc>> {
    if k == 0 {
        return Err(IndexError::InvalidArgument("k must be at least 1".into()));
    }
    if max_candidates < k {
        return Err(IndexError::InvalidArgument(format!(
            "max_candidates ({max_candidates}) must be >= k ({k})"
        )));
    }
    if query_tokens.is_empty() {
        return Err(IndexError::EmptyQuery);
    }
    Ok(index
        .top_hits(query_tokens, k)
        .into_iter()
        .map(|(d, s)| ScoredDoc::new(index.doc_id(d), s))
        .collect())
}

/// Every indexed document ranked by BM25 score: hits first, then documents
/// scoring zero in ascending id order.
pub fn bm25_full_ranking(index: &InvertedIndex, query_tokens: &[String]) -> Vec<String> {
    let hits = index.top_hits(query_tokens, usize::MAX);
    let mut seen = vec![false; index.doc_count()];
    let mut out: Vec<String> = Vec::with_capacity(index.doc_count());
    for (d, _) in &hits {
        seen[*d as usize] = true;
        out.push(index.doc_id(*d).to_string());
    }
    out.extend(
        index
            .doc_ids()
            .iter()
            .zip(&seen)
            .filter(|(_, s)| !**s)
            .map(|(id, _)| id.clone()),
    );
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Exact cosine-similarity top-k. Documents with a zero vector score 0.
pub fn dense_topk(store: &EmbeddingStore, query: &[f64], k: usize) -> Result<Vec<ScoredDoc>> {
    if query.len() != store.dim() {
        return Err(IndexError::DimMismatch {
            expected: store.dim(),
            got: query.len(),
        });
    }
    if k == 0 {
        return Err(IndexError::InvalidArgument("k must be at least 1".into()));
    }
    let qn = norm(query);
    if qn == 0.0 || !qn.is_finite() {
        return Err(IndexError::ZeroVector);
    }
    let mut scored: Vec<ScoredDoc> = store
        .iter()
        .map(|(id, v)| {
            let dn = norm(v);
            let cos = if dn == 0.0 {
                0.0
            } else {
                v.iter().zip(query).map(|(a, b)| a * b).sum::<f64>() / (dn * qn)
            };
            ScoredDoc::new(id, cos)
        })
        .collect();
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, rank_order);
        scored.truncate(k);
    }
    scored.sort_by(rank_order);
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Product;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    fn index_of(docs: &[(&str, &str)]) -> InvertedIndex {
        InvertedIndex::from_documents(
            docs.iter().map(|(a, b)| (a.to_string(), b.to_string())),
            FieldPolicy::default(),
        )
        .unwrap()
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("Best Balloons!"), vec!["best", "balloons"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("60x102 inch"), vec!["60x102", "inch"]);
        assert_eq!(tokenize("  --a--B  "), vec!["a", "b"]);
    }

    #[test]
    fn single_doc_index() {
        let idx = index_of(&[("d", "red ball")]);
        assert_eq!(idx.doc_count(), 1);
        assert_eq!(idx.postings("red"), &[Posting { doc: 0, tf: 1 }]);
        assert_eq!(idx.postings("ball"), &[Posting { doc: 0, tf: 1 }]);
        assert_eq!(idx.num_terms(), 2);
        let idx = index_of(&[("d", "ball red ball")]);
        assert_eq!(idx.postings("ball")[0].tf, 2);
        assert_eq!(idx.avg_doc_len(), 3.0);
    }

    #[test]
    fn build_from_store_concatenates_fields() {
        let store = ProductStore::from_products([Product {
            id: "p".into(),
            title: "Red".into(),
            description: "Ball".into(),
            parent_category: "T".into(),
            sub_category: "S".into(),
            brand: None,
        }])
        .unwrap();
        let idx = build_index(&store, FieldPolicy::TitleDescription).unwrap();
        assert_eq!(idx.doc_len("p"), Some(2));
        let idx = build_index(&store, FieldPolicy::TitleOnly).unwrap();
        assert_eq!(idx.doc_len("p"), Some(1));
        assert!(matches!(
            build_index(&ProductStore::new(), FieldPolicy::default()),
            Err(IndexError::EmptyStore)
        ));
    }

    #[test]
    fn zero_hit_query() {
        let idx = index_of(&[("d1", "red ball")]);
        assert!(bm25_topk(&idx, &toks("shoes"), 3, 10).unwrap().is_empty());
        assert!(matches!(bm25_topk(&idx, &[], 3, 10), Err(IndexError::EmptyQuery)));
        assert!(matches!(
            bm25_topk(&idx, &toks("red"), 3, 2),
            Err(IndexError::InvalidArgument(_))
        ));
    }

    #[test]
    fn three_doc_hand_computed() {
        let idx = index_of(&[("d1", "best balloons"), ("d2", "balloons"), ("d3", "shoes")]);
        let got = bm25_topk(&idx, &toks("best balloons"), 3, 3).unwrap();
        // N=3, avgdl=4/3. idf(best) = ln(1 + 2.5/1.5), idf(balloons) = ln(1 + 1.5/2.5)
        let idf_best = (1.0f64 + 2.5 / 1.5).ln();
        let idf_bal = (1.0f64 + 1.5 / 2.5).ln();
        let avg = 4.0 / 3.0;
        let tfn = |dl: f64| 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * dl / avg));
        let d1 = idf_best * tfn(2.0) + idf_bal * tfn(2.0);
        let d2 = idf_bal * tfn(1.0);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].doc_id, "d1");
        assert_eq!(got[1].doc_id, "d2");
        assert!((got[0].score - d1).abs() < 1e-12);
        assert!((got[1].score - d2).abs() < 1e-12);
    }

    #[test]
    fn ties_break_by_doc_id() {
        let idx = index_of(&[("b", "red shoe"), ("a", "red shoe"), ("c", "blue")]);
        let got = bm25_topk(&idx, &toks("red"), 5, 5).unwrap();
        assert_eq!(got[0].doc_id, "a");
        assert_eq!(got[1].doc_id, "b");
        assert_eq!(got[0].score, got[1].score);
    }

    #[test]
    fn full_ranking_covers_corpus() {
        let idx = index_of(&[
            ("d1", "best balloons"),
            ("d2", "balloons"),
            ("d3", "shoes"),
            ("d0", "hat"),
        ]);
        assert_eq!(
            bm25_full_ranking(&idx, &toks("balloons best")),
            vec!["d1", "d2", "d0", "d3"]
        );
    }

    #[test]
    fn snapshot_roundtrip() {
        let idx = index_of(&[
            ("d1", "best balloons party"),
            ("d2", "balloons balloons"),
            ("d3", "shoes"),
        ]);
        let mut buf = Vec::new();
        idx.write_snapshot(&mut buf).unwrap();
        let back = InvertedIndex::read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back, idx);
        buf[0] = b'X';
        assert!(matches!(
            InvertedIndex::read_snapshot(buf.as_slice()),
            Err(IndexError::Snapshot(_))
        ));
        assert!(InvertedIndex::read_snapshot(&buf[..10]).is_err());
    }

    #[test]
    fn dense_identity_and_orthogonality() {
        let mut store = EmbeddingStore::new(2);
        store.insert("x", &[1.0, 0.0]).unwrap();
        store.insert("y", &[0.0, 3.0]).unwrap();
        store.insert("z", &[1.0, 1.0]).unwrap();
        let got = dense_topk(&store, &[2.0, 0.0], 3).unwrap();
        assert_eq!(got[0].doc_id, "x");
        assert!((got[0].score - 1.0).abs() < 1e-9);
        assert_eq!(got[2].doc_id, "y");
        assert_eq!(got[2].score, 0.0);
        assert!(matches!(
            dense_topk(&store, &[0.0, 0.0], 1),
            Err(IndexError::ZeroVector)
        ));
        assert!(matches!(
            dense_topk(&store, &[1.0], 1),
            Err(IndexError::DimMismatch { expected: 2, got: 1 })
        ));
    }
}
