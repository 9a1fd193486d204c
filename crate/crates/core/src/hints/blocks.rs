use std::collections::BTreeMap;

pub const BLOCK_TAGS: [&str; 4] = ["analysis", "brands", "features", "feature_coverage_queries"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BlockError {
    #[error("missing <{0}> block")]
    MissingBlock(&'static str),
    #[error("<{0}> block is never closed")]
    UnclosedBlock(&'static str),
}

/// Body of the first `<tag>...</tag>` for each of the four hint tags. Bodies
/// are returned verbatim, ending at the first matching closer.
pub fn extract_blocks(raw: &str) -> Result<BTreeMap<&'static str, &str>, BlockError> {
    let mut out = BTreeMap::new();
    for tag in BLOCK_TAGS {
        let open = format!("<{tag}>");
        let close = format!("</{tag}>");
        let start = raw.find(&open).ok_or(BlockError::MissingBlock(tag))? + open.len();
        let len = raw[start..].find(&close).ok_or(BlockError::UnclosedBlock(tag))?;
        out.insert(tag, &raw[start..start + len]);
    }
    Ok(out)
}
