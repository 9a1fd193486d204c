use serde::{Deserialize, Serialize};

use super::{BrandHint, HintSet};
use crate::corpus::{Product, SuperlativeQuery};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnrichmentMode {
    /// Replace the query with the first coverage query.
    #[default]
    CoverageQuery,
    /// Append feature names, most important first.
    FeatureAugment,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichOptions {
    pub mode: EnrichmentMode,
    /// In feature_augment mode, follow each feature name with its synonyms.
    #[serde(default)]
    pub include_synonyms: bool,
}

impl From<EnrichmentMode> for EnrichOptions {
    fn from(mode: EnrichmentMode) -> Self {
        Self {
            mode,
            include_synonyms: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnrichError {
    #[error("hint set has no {0} for this enrichment mode")]
    EmptyHints(&'static str),
}

pub fn enrich_query(q: &SuperlativeQuery, h: &HintSet, opts: impl Into<EnrichOptions>) -> Result<String, EnrichError> {
    let opts = opts.into();
    match opts.mode {
        EnrichmentMode::CoverageQuery => h
            .coverage_queries
            .first()
            .cloned()
            .ok_or(EnrichError::EmptyHints("coverage queries")),
        EnrichmentMode::FeatureAugment => {
            if h.features.is_empty() {
                return Err(EnrichError::EmptyHints("features"));
            }
            let mut order: Vec<_> = h.features.iter().collect();
            // stable: equal importance keeps list order
            order.sort_by_key(|f| std::cmp::Reverse(f.importance));
            let mut out = q.text.clone();
            for f in order {
                out.push(' ');
                out.push_str(&f.name);
                if opts.include_synonyms {
                    for s in &f.synonyms {
                        out.push(' ');
                        out.push_str(s);
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Up to three brands by descending confidence; ties keep list order.
pub fn top_brands(h: &HintSet) -> Vec<&BrandHint> {
    let mut brands: Vec<_> = h.brands.iter().collect();
    brands.sort_by_key(|b| std::cmp::Reverse(b.confidence));
    brands.truncate(3);
    brands
}

/// The query half of a pointwise input: `relevance query: <enriched>` plus
/// ` brands: a, b, c` when the hint set has brands.
pub fn pointwise_query_repr(enriched: &str, h: &HintSet) -> String {
    let mut out = format!("relevance query: {enriched}");
    let brands = top_brands(h);
    if !brands.is_empty() {
        out.push_str(" brands: ");
        let names: Vec<&str> = brands.iter().map(|b| b.name.as_str()).collect();
        out.push_str(&names.join(", "));
    }
    out
}

/// Query half of an un-hinted pointwise input.
pub fn plain_query_repr(q: &SuperlativeQuery) -> String {
    format!("relevance query: {}", q.text)
}

pub fn format_pointwise_input(enriched: &str, h: &HintSet, p: &Product) -> String {
    format!(
        "{} product: {} {}",
        pointwise_query_repr(enriched, h),
        p.title,
        p.description
    )
}
