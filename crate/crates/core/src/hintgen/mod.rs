//! Prompt rendering, text-generation providers, and the hint cache.

mod cache;
mod mock;
mod provider;
pub mod templates;

use std::collections::HashMap;

pub use cache::{normalize_query, query_hash, CacheError, HintCache};
pub use mock::MockProvider;
pub use provider::{
    extract_completion_text, Counting, Delayed, HttpProvider, ProviderConfig, ProviderError, ProviderKind,
    TextProvider, ENV_API_KEY, ENV_ENDPOINT, ENV_TIMEOUT_MS, MAX_RETRIES_LIMIT,
};
pub use templates::{render, PromptTemplate, TemplateError, TemplateName};

use crate::corpus::{Label, Product, RelevanceJudgment, SuperlativeQuery};
use crate::hints::{parse_hintset, parse_literal, HintError, HintSet, LiteralValue};

const EXCERPT_CHARS: usize = 200;

#[derive(Debug, thiserror::Error)]
pub enum HintgenError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("reply failed to parse twice; last reply began {excerpt:?}")]
    ParseFailedTwice { excerpt: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("expected {expected} items in reply, got {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("unknown relevance label {0:?}")]
    UnknownLabel(String),
    #[error("confidence {0} outside 0-100")]
    ConfidenceRange(i64),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Cache(#[from] CacheError),
}

fn excerpt(raw: &str) -> String {
    raw.chars().take(EXCERPT_CHARS).collect()
}

/// Calls the provider, parses with `parse`, and retries the same prompt once
/// if the first reply does not parse.
fn complete_parsed<T, E: std::fmt::Display>(
    provider: &dyn TextProvider,
    prompt: &str,
    parse: impl Fn(&str) -> Result<T, E>,
) -> Result<T, HintgenError> {
    let mut last = String::new();
    for attempt in 0..2 {
        let raw = provider.complete(prompt)?;
        match parse(&raw) {
            Ok(v) => return Ok(v),
            Err(e) => log::warn!("reply parse failed (attempt {}): {e}", attempt + 1),
        }
        last = raw;
    }
    Err(HintgenError::ParseFailedTwice {
        excerpt: excerpt(&last),
    })
}

pub fn hint_prompt(query_text: &str, num_queries: usize) -> Result<String, TemplateError> {
    let bindings: HashMap<&str, String> = [
        ("num_queries", num_queries.to_string()),
        ("query", query_text.to_string()),
    ]
    .into_iter()
    .collect();
    render(TemplateName::HintGeneration, &bindings)
}

/// Hints for `q`, from the cache when present. Fresh results are appended to
/// the cache.
pub fn gen_hints(
    q: &SuperlativeQuery,
    provider: &dyn TextProvider,
    cache: Option<&HintCache>,
    num_queries: usize,
) -> Result<HintSet, HintgenError> {
    if num_queries == 0 {
        return Err(HintgenError::InvalidArgument("num_queries must be at least 1".into()));
    }
    if let Some(h) = cache.and_then(|c| c.get(&q.text)) {
        return Ok(h);
    }
    let prompt = hint_prompt(&q.text, num_queries)?;
    let hints = complete_parsed(provider, &prompt, |raw| -> Result<HintSet, HintError> {
        parse_hintset(raw, num_queries)
    })?;
    if let Some(c) = cache {
        c.insert(&q.id, &q.text, &hints)?;
    }
    Ok(hints)
}

fn parse_list_reply(raw: &str) -> Result<Vec<LiteralValue>, String> {
    let whole = parse_literal(raw.trim());
    let v = match whole {
        Ok(v) => v,
        Err(e) => {
            // models often wrap the list in prose or a code fence
            let (Some(i), Some(j)) = (raw.find('['), raw.rfind(']')) else {
                return Err(e.to_string());
            };
            if j < i {
                return Err(e.to_string());
            }
            parse_literal(&raw[i..=j]).map_err(|e| e.to_string())?
        }
    };
    match v {
        LiteralValue::List(items) => Ok(items),
        other => Err(format!("expected a list, got {}", other.type_name())),
    }
}

/// Generates `n` superlative queries for a category. Short or long replies are
/// accepted with a warning; the caller is expected to drop zero-hit queries.
pub fn gen_queries(category: (&str, &str), n: usize, provider: &dyn TextProvider) -> Result<Vec<String>, HintgenError> {
    if n == 0 {
        return Err(HintgenError::InvalidArgument("n must be at least 1".into()));
    }
    let noun = if category.1.is_empty() { category.0 } else { category.1 };
    let bindings: HashMap<&str, String> = [("n", n.to_string()), ("noun", noun.to_string())].into_iter().collect();
    let prompt = render(TemplateName::QueryGeneration, &bindings)?;
    let queries = complete_parsed(provider, &prompt, |raw| {
        parse_list_reply(raw)?
            .into_iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| "non-string query".to_string())
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    if queries.len() != n {
        log::warn!("asked for {n} queries, provider returned {}", queries.len());
    }
    Ok(queries)
}

/// The `<input>` section of the annotation prompt.
pub fn annotation_input(batch: &[(SuperlativeQuery, Product)]) -> String {
    let mut out = String::new();
    for (i, (q, p)) in batch.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!(
            "Pair {}:\nQuery: {}\nProduct: [{}] {}\n",
            i + 1,
            q.text,
            p.id,
            p.text()
        ));
    }
    out.trim_end().to_string()
}

fn judgment_from(q: &SuperlativeQuery, p: &Product, v: &LiteralValue) -> Result<RelevanceJudgment, HintgenError> {
    let bad = |what: &str| HintgenError::InvalidArgument(format!("annotation entry {what}"));
    let label_s = v
        .get("label")
        .and_then(LiteralValue::as_str)
        .ok_or_else(|| bad("lacks a string label"))?;
    let label: Label = label_s
        .parse()
        .map_err(|_| HintgenError::UnknownLabel(label_s.to_string()))?;
    let confidence = v
        .get("confidence")
        .and_then(LiteralValue::as_int)
        .ok_or_else(|| bad("lacks an integer confidence"))?;
    if !(0..=100).contains(&confidence) {
        return Err(HintgenError::ConfidenceRange(confidence));
    }
    Ok(RelevanceJudgment {
        query_id: q.id.clone(),
        product_id: p.id.clone(),
        label,
        confidence: confidence as u8,
        reasoning: v.get("reasoning").and_then(LiteralValue::as_str).map(str::to_string),
    })
}

/// Labels a batch of pairs with one provider call. Output order follows input order.
pub fn annotate_pairs(
    batch: &[(SuperlativeQuery, Product)],
    provider: &dyn TextProvider,
) -> Result<Vec<RelevanceJudgment>, HintgenError> {
    if batch.is_empty() {
        return Err(HintgenError::InvalidArgument("empty annotation batch".into()));
    }
    let bindings: HashMap<&str, String> = [
        ("batch_size", batch.len().to_string()),
        ("input", annotation_input(batch)),
    ]
    .into_iter()
    .collect();
    let prompt = render(TemplateName::RelevanceAnnotation, &bindings)?;
    let items = complete_parsed(provider, &prompt, parse_list_reply)?;
    if items.len() != batch.len() {
        return Err(HintgenError::CountMismatch {
            expected: batch.len(),
            got: items.len(),
        });
    }
    batch
        .iter()
        .zip(&items)
        .map(|((q, p), v)| judgment_from(q, p, v))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Scripted(Mutex<Vec<String>>);

    impl Scripted {
        fn new(replies: &[&str]) -> Self {
            Self(Mutex::new(replies.iter().rev().map(|s| s.to_string()).collect()))
        }
    }

    impl TextProvider for Scripted {
        fn complete(&self, _: &str) -> Result<String, ProviderError> {
            self.0
                .lock()
                .unwrap()
                .pop()
                .ok_or(ProviderError::Other("script exhausted".into()))
        }
    }

    fn query(text: &str) -> SuperlativeQuery {
        SuperlativeQuery {
            id: "q1".into(),
            text: text.into(),
            parent_category: "Toys".into(),
            sub_category: "Balloons".into(),
        }
    }

    fn product(id: &str, title: &str) -> Product {
        Product {
            id: id.into(),
            title: title.into(),
            description: "party".into(),
            parent_category: "Toys".into(),
            sub_category: "Balloons".into(),
            brand: None,
        }
    }

    #[test]
    fn cache_hit_skips_provider() {
        let p = Counting::new(MockProvider::new(5));
        let cache = HintCache::in_memory();
        let a = gen_hints(&query("best balloons"), &p, Some(&cache), 10).unwrap();
        let b = gen_hints(&query("Best  balloons!"), &p, Some(&cache), 10).unwrap();
        assert_eq!(a, b);
        assert_eq!(p.calls(), 1);
        assert_eq!(cache.len(), 1);
        assert_eq!(a.coverage_queries.len(), 10);
    }

    #[test]
    fn retries_once_then_fails() {
        let p = Counting::new(Scripted::new(&["no blocks here", "still nothing"]));
        match gen_hints(&query("best tent"), &p, None, 10) {
            Err(HintgenError::ParseFailedTwice { excerpt }) => assert_eq!(excerpt, "still nothing"),
            other => panic!("{other:?}"),
        }
        assert_eq!(p.calls(), 2);

        let good = MockProvider::new(1)
            .complete(&hint_prompt("best tent", 10).unwrap())
            .unwrap();
        let p = Counting::new(Scripted::new(&["garbage", &good]));
        assert!(gen_hints(&query("best tent"), &p, None, 10).is_ok());
        assert_eq!(p.calls(), 2);
    }

    #[test]
    fn gen_queries_rules() {
        let m = MockProvider::new(2);
        let qs = gen_queries(("Toys", "balloons"), 5, &m).unwrap();
        assert_eq!(qs.len(), 5);
        assert!(matches!(
            gen_queries(("Toys", "balloons"), 0, &m),
            Err(HintgenError::InvalidArgument(_))
        ));
        let short = Scripted::new(&["Sure! ```python\n['best a', 'top b', 'most popular c', 'best d']\n```"]);
        assert_eq!(gen_queries(("Toys", "balloons"), 5, &short).unwrap().len(), 4);
    }

    #[test]
    fn annotate_in_order() {
        let batch = vec![
            (query("best balloons"), product("p1", "Latex Balloons")),
            (query("best balloons"), product("p2", "Garden Hose")),
            (query("best balloons"), product("p3", "Foil Balloons")),
        ];
        let reply = r#"[
            {"reasoning": "a", "label": "relevant and best", "confidence": 90},
            {"reasoning": "b", "label": "irrelevant", "confidence": 80},
            {"reasoning": "c", "label": "relevant but not best", "confidence": 70},
        ]"#;
        let out = annotate_pairs(&batch, &Scripted::new(&[reply])).unwrap();
        let labels: Vec<_> = out.iter().map(|j| (j.product_id.as_str(), j.label)).collect();
        assert_eq!(
            labels,
            vec![
                ("p1", Label::RelevantAndBest),
                ("p2", Label::Irrelevant),
                ("p3", Label::RelevantNotBest)
            ]
        );

        let two = r#"[{"label": "irrelevant", "confidence": 1}, {"label": "irrelevant", "confidence": 2}]"#;
        assert!(matches!(
            annotate_pairs(&batch, &Scripted::new(&[two])),
            Err(HintgenError::CountMismatch { expected: 3, got: 2 })
        ));
        let hot = r#"[{"label": "irrelevant", "confidence": 150}]"#;
        assert!(matches!(
            annotate_pairs(&batch[..1], &Scripted::new(&[hot])),
            Err(HintgenError::ConfidenceRange(150))
        ));
        let maybe = r#"[{"label": "maybe", "confidence": 5}]"#;
        assert!(matches!(
            annotate_pairs(&batch[..1], &Scripted::new(&[maybe])),
            Err(HintgenError::UnknownLabel(_))
        ));
        // the mock answers the real prompt with one entry per pair
        assert_eq!(annotate_pairs(&batch, &MockProvider::new(0)).unwrap().len(), 3);
    }
}
