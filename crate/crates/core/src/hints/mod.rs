//! Structured interpretations of superlative queries.
//!
//! A hint-generation reply carries four tagged blocks, each holding a literal
//! (see [`literal`]):
//!
//! ```text
//! <analysis>{"domain": ..., "ranking_intent": ..., "query_clarification": ...}</analysis>
//! <brands>[{"name": ..., "confidence": 0-100}, ...]</brands>
//! <features>[{"name", "synonyms", "category", "importance": 1-10, "brands_known_for"}, ...]</features>
//! <feature_coverage_queries>["...", ...]</feature_coverage_queries>
//! ```

mod blocks;
mod enrich;
pub mod literal;

pub use blocks::{extract_blocks, BlockError, BLOCK_TAGS};
pub use enrich::{
    enrich_query, format_pointwise_input, plain_query_repr, pointwise_query_repr, top_brands, EnrichError,
    EnrichOptions, EnrichmentMode,
};
pub use literal::{parse_literal, LiteralError, LiteralValue};

use literal::write_string;

pub const DEFAULT_COVERAGE_QUERIES: usize = 10;
pub const MAX_LIST_ENTRIES: usize = 10;
/// Brand and feature counts outside this range draw a warning.
pub const PREFERRED_LIST_RANGE: std::ops::RangeInclusive<usize> = 5..=10;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Analysis {
    pub domain: String,
    pub ranking_intent: String,
    pub query_clarification: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BrandHint {
    pub name: String,
    pub confidence: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureHint {
    pub name: String,
    pub synonyms: Vec<String>,
    pub category: String,
    pub importance: u8,
    pub brands_known_for: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HintSet {
    pub analysis: Analysis,
    pub brands: Vec<BrandHint>,
    pub features: Vec<FeatureHint>,
    pub coverage_queries: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HintError {
    #[error(transparent)]
    Block(#[from] BlockError),
    #[error("in <{block}>: {source}")]
    Literal {
        block: &'static str,
        #[source]
        source: LiteralError,
    },
    #[error("schema error in {field}: {reason}")]
    Schema { field: String, reason: String },
}

impl HintError {
    /// The offending field for schema errors.
    pub fn field(&self) -> Option<&str> {
        match self {
            HintError::Schema { field, .. } => Some(field),
            _ => None,
        }
    }
}

fn schema(field: impl Into<String>, reason: impl Into<String>) -> HintError {
    HintError::Schema {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HintWarning {
    /// Brand or feature count outside the preferred 5-10 range.
    ListSize {
        block: &'static str,
        count: usize,
    },
    /// More than ten entries; the tail was dropped.
    Truncated {
        block: &'static str,
        count: usize,
    },
    NoSynonyms {
        feature: String,
    },
}

/// Parses a hint-generation reply, requiring exactly `expected_queries`
/// coverage queries. Warnings are logged.
pub fn parse_hintset(raw: &str, expected_queries: usize) -> Result<HintSet, HintError> {
    let (h, warnings) = parse_hintset_with_warnings(raw, Some(expected_queries))?;
    for w in &warnings {
        log::warn!("hint validation: {w:?}");
    }
    Ok(h)
}

/// Like [`parse_hintset`] but returns warnings to the caller. With
/// `expected_queries = None` any nonzero number of coverage queries is accepted.
pub fn parse_hintset_with_warnings(
    raw: &str,
    expected_queries: Option<usize>,
) -> Result<(HintSet, Vec<HintWarning>), HintError> {
    let blocks = extract_blocks(raw)?;
    let lit =
        |tag: &'static str| parse_literal(blocks[tag]).map_err(|source| HintError::Literal { block: tag, source });
    let analysis_v = lit("analysis")?;
    let brands_v = lit("brands")?;
    let features_v = lit("features")?;
    let queries_v = lit("feature_coverage_queries")?;

    let mut warnings = Vec::new();
    let analysis = parse_analysis(&analysis_v)?;
    let mut brands = list_of(&brands_v, "brands")?
        .iter()
        .enumerate()
        .map(|(i, v)| parse_brand(i, v))
        .collect::<Result<Vec<_>, _>>()?;
    let mut features = list_of(&features_v, "features")?
        .iter()
        .enumerate()
        .map(|(i, v)| parse_feature(i, v))
        .collect::<Result<Vec<_>, _>>()?;
    check_count("brands", &mut brands, &mut warnings)?;
    check_count("features", &mut features, &mut warnings)?;
    for f in &features {
        if f.synonyms.is_empty() {
            warnings.push(HintWarning::NoSynonyms {
                feature: f.name.clone(),
            });
        }
    }

    let coverage_queries = list_of(&queries_v, "feature_coverage_queries")?
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let field = format!("feature_coverage_queries[{i}]");
            let s = expect_str(v, &field)?;
            if s.trim().is_empty() {
                return Err(schema(field, "empty query"));
            }
            Ok(s.to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;
    match expected_queries {
        Some(n) if coverage_queries.len() != n => {
            return Err(schema(
                "feature_coverage_queries",
                format!("expected {n} queries, got {}", coverage_queries.len()),
            ))
        }
        None if coverage_queries.is_empty() => return Err(schema("feature_coverage_queries", "no queries")),
        _ => {}
    }

    Ok((
        HintSet {
            analysis,
            brands,
            features,
            coverage_queries,
        },
        warnings,
    ))
}

fn check_count<T>(block: &'static str, items: &mut Vec<T>, warnings: &mut Vec<HintWarning>) -> Result<(), HintError> {
    let count = items.len();
    if count == 0 {
        return Err(schema(block, "at least one entry required"));
    }
    if count > MAX_LIST_ENTRIES {
        items.truncate(MAX_LIST_ENTRIES);
        warnings.push(HintWarning::Truncated { block, count });
    }
    if !PREFERRED_LIST_RANGE.contains(&count) {
        warnings.push(HintWarning::ListSize { block, count });
    }
    Ok(())
}

fn list_of<'a>(v: &'a LiteralValue, field: &str) -> Result<&'a [LiteralValue], HintError> {
    v.as_list()
        .ok_or_else(|| schema(field, format!("expected list, found {}", v.type_name())))
}

fn expect_str<'a>(v: &'a LiteralValue, field: &str) -> Result<&'a str, HintError> {
    v.as_str()
        .ok_or_else(|| schema(field, format!("expected string, found {}", v.type_name())))
}

fn expect_int(v: &LiteralValue, field: &str) -> Result<i64, HintError> {
    v.as_int()
        .ok_or_else(|| schema(field, format!("expected integer, found {}", v.type_name())))
}

fn expect_str_list(v: &LiteralValue, field: &str) -> Result<Vec<String>, HintError> {
    list_of(v, field)?
        .iter()
        .map(|s| expect_str(s, field).map(str::to_string))
        .collect()
}

/// Checks that `v` is a map with exactly the `keys` and returns values in key order.
fn exact_map<'a, const N: usize>(
    v: &'a LiteralValue,
    field: &str,
    keys: [&str; N],
) -> Result<[&'a LiteralValue; N], HintError> {
    let map = v
        .as_map()
        .ok_or_else(|| schema(field, format!("expected map, found {}", v.type_name())))?;
    if let Some((k, _)) = map.iter().find(|(k, _)| !keys.contains(&k.as_str())) {
        return Err(schema(field, format!("unexpected key {k:?}")));
    }
    let mut out = [v; N];
    for (slot, key) in out.iter_mut().zip(keys) {
        *slot = v.get(key).ok_or_else(|| schema(format!("{field}.{key}"), "missing"))?;
    }
    Ok(out)
}

fn parse_analysis(v: &LiteralValue) -> Result<Analysis, HintError> {
    let [domain, intent, clarification] =
        exact_map(v, "analysis", ["domain", "ranking_intent", "query_clarification"])?;
    Ok(Analysis {
        domain: expect_str(domain, "analysis.domain")?.to_string(),
        ranking_intent: expect_str(intent, "analysis.ranking_intent")?.to_string(),
        query_clarification: expect_str(clarification, "analysis.query_clarification")?.to_string(),
    })
}

fn parse_brand(i: usize, v: &LiteralValue) -> Result<BrandHint, HintError> {
    let field = format!("brands[{i}]");
    let [name, confidence] = exact_map(v, &field, ["name", "confidence"])?;
    let name = expect_str(name, &format!("{field}.name"))?;
    if name.trim().is_empty() {
        return Err(schema("name", format!("{field}: empty brand name")));
    }
    let c = expect_int(confidence, "confidence")?;
    let confidence = u8::try_from(c)
        .ok()
        .filter(|c| *c <= 100)
        .ok_or_else(|| schema("confidence", format!("{field}: {c} outside [0,100]")))?;
    Ok(BrandHint {
        name: name.to_string(),
        confidence,
    })
}

fn parse_feature(i: usize, v: &LiteralValue) -> Result<FeatureHint, HintError> {
    let field = format!("features[{i}]");
    let [name, synonyms, category, importance, known] = exact_map(
        v,
        &field,
        ["name", "synonyms", "category", "importance", "brands_known_for"],
    )?;
    let name = expect_str(name, &format!("{field}.name"))?;
    if name.trim().is_empty() {
        return Err(schema("name", format!("{field}: empty feature name")));
    }
    let imp = expect_int(importance, "importance")?;
    let importance = u8::try_from(imp)
        .ok()
        .filter(|i| (1..=10).contains(i))
        .ok_or_else(|| schema("importance", format!("{field}: {imp} outside [1,10]")))?;
    Ok(FeatureHint {
        name: name.to_string(),
        synonyms: expect_str_list(synonyms, &format!("{field}.synonyms"))?,
        category: expect_str(category, &format!("{field}.category"))?.to_string(),
        importance,
        brands_known_for: expect_str_list(known, &format!("{field}.brands_known_for"))?,
    })
}

fn push_str_list(out: &mut String, items: &[String]) {
    out.push('[');
    for (i, s) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_string(out, s);
    }
    out.push(']');
}

/// Canonical block rendering, inverted exactly by [`parse_hintset`].
pub fn serialize_hintset(h: &HintSet) -> String {
    let mut out = String::new();
    out.push_str("<analysis>\n{\n    \"domain\": ");
    write_string(&mut out, &h.analysis.domain);
    out.push_str(",\n    \"ranking_intent\": ");
    write_string(&mut out, &h.analysis.ranking_intent);
    out.push_str(",\n    \"query_clarification\": ");
    write_string(&mut out, &h.analysis.query_clarification);
    out.push_str("\n}\n</analysis>\n\n<brands>\n[\n");
    for b in &h.brands {
        out.push_str("    {\"name\": ");
        write_string(&mut out, &b.name);
        out.push_str(&format!(", \"confidence\": {}}},\n", b.confidence));
    }
    out.push_str("]\n</brands>\n\n<features>\n[\n");
    for f in &h.features {
        out.push_str("    {\n        \"name\": ");
        write_string(&mut out, &f.name);
        out.push_str(",\n        \"synonyms\": ");
        push_str_list(&mut out, &f.synonyms);
        out.push_str(",\n        \"category\": ");
        write_string(&mut out, &f.category);
        out.push_str(&format!(",\n        \"importance\": {},\n", f.importance));
        out.push_str("        \"brands_known_for\": ");
        push_str_list(&mut out, &f.brands_known_for);
        out.push_str("\n    },\n");
    }
    out.push_str("]\n</features>\n\n<feature_coverage_queries>\n[\n");
    for q in &h.coverage_queries {
        out.push_str("    ");
        write_string(&mut out, q);
        out.push_str(",\n");
    }
    out.push_str("]\n</feature_coverage_queries>\n");
    out
}
