//! Append-only hint cache keyed by normalized query text.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::hints::{parse_hintset_with_warnings, serialize_hintset, HintError, HintSet};
use crate::index::tokenize;

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("hint cache line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("hint cache line {line}: stored hints do not parse: {source}")]
    BadHints { line: usize, source: HintError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Tokenized, space-joined query text.
pub fn normalize_query(text: &str) -> String {
    tokenize(text).join(" ")
}

/// Hex sha256 of the normalized query.
pub fn query_hash(text: &str) -> String {
    hex::encode(Sha256::digest(normalize_query(text).as_bytes()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheRecord {
    query_id: String,
    query_hash: String,
    hints: String,
}

pub struct HintCache {
    entries: RwLock<HashMap<String, HintSet>>,
    writer: Option<Mutex<BufWriter<File>>>,
    path: Option<PathBuf>,
}

impl HintCache {
    pub fn in_memory() -> Self {
        Self {
            entries: RwLock::new(HashMap::new()),
            writer: None,
            path: None,
        }
    }

    /// Loads existing records from `path` (if present) and appends new ones to it.
    /// A later record for the same hash never replaces an earlier one.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CacheError> {
        let path = path.as_ref();
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CacheRecord = serde_json::from_str(&line).map_err(|e| CacheError::Malformed {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
                let (hints, _) = parse_hintset_with_warnings(&rec.hints, None)
                    .map_err(|source| CacheError::BadHints { line: i + 1, source })?;
                entries.entry(rec.query_hash).or_insert(hints);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            entries: RwLock::new(entries),
            writer: Some(Mutex::new(BufWriter::new(file))),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, query_text: &str) -> Option<HintSet> {
        self.entries.read().unwrap().get(&query_hash(query_text)).cloned()
    }

    /// Returns false (and writes nothing) when the normalized query is already cached.
    pub fn insert(&self, query_id: &str, query_text: &str, hints: &HintSet) -> Result<bool, CacheError> {
        let hash = query_hash(query_text);
        let mut entries = self.entries.write().unwrap();
        if entries.contains_key(&hash) {
            return Ok(false);
        }
        if let Some(writer) = &self.writer {
            let rec = CacheRecord {
                query_id: query_id.to_string(),
                query_hash: hash.clone(),
                hints: serialize_hintset(hints),
            };
            let mut w = writer.lock().unwrap();
            serde_json::to_writer(&mut *w, &rec).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        entries.insert(hash, hints.clone());
        Ok(true)
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hints::tests::sample;

    #[test]
    fn normalization() {
        assert_eq!(normalize_query("  Best   TENT!! "), "best tent");
        assert_eq!(query_hash("best tent"), query_hash("BEST, tent"));
        assert_eq!(query_hash("best tent").len(), 64);
    }

    #[test]
    fn insert_is_idempotent() {
        let c = HintCache::in_memory();
        assert!(c.insert("q1", "best tent", &sample()).unwrap());
        assert!(!c.insert("q2", "Best Tent", &sample()).unwrap());
        assert_eq!(c.len(), 1);
        assert_eq!(c.get("best   tent"), Some(sample()));
        assert_eq!(c.get("tent"), None);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hints.jsonl");
        {
            let c = HintCache::open(&path).unwrap();
            c.insert("q1", "best tent", &sample()).unwrap();
            c.insert("q1", "best tent", &sample()).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        let rec: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(rec["query_id"], "q1");
        assert_eq!(rec["query_hash"], query_hash("best tent"));
        let c = HintCache::open(&path).unwrap();
        assert_eq!(c.get("best tent"), Some(sample()));
    }
}
