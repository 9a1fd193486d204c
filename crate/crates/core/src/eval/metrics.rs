use std::collections::HashSet;

/// `|top-k ∩ positives| / k`; the denominator stays `k` for short rankings.
pub fn precision_at_k<S: AsRef<str>>(ranking: &[S], positives: &HashSet<String>, k: usize) -> f64 {
    assert!(k >= 1, "precision_at_k needs k >= 1");
    let hits = ranking
        .iter()
        .take(k)
        .filter(|d| positives.contains(d.as_ref()))
        .count();
    hits as f64 / k as f64
}

/// Mean of P@r over the ranks r holding a positive, divided by the total
/// number of positives (unretrieved ones contribute 0). 0 when there are no
/// positives.
pub fn average_precision<S: AsRef<str>>(ranking: &[S], positives: &HashSet<String>) -> f64 {
    if positives.is_empty() {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, d) in ranking.iter().enumerate() {
        if positives.contains(d.as_ref()) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / positives.len() as f64
}

/// `1 / rank` of the first positive, 0 if none is ranked.
pub fn reciprocal_rank<S: AsRef<str>>(ranking: &[S], positives: &HashSet<String>) -> f64 {
    ranking
        .iter()
        .position(|d| positives.contains(d.as_ref()))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// Mean reciprocal rank over queries; 0 for an empty suite.
pub fn mrr<S: AsRef<str>>(suite: &[(Vec<S>, HashSet<String>)]) -> f64 {
    if suite.is_empty() {
        return 0.0;
    }
    suite.iter().map(|(r, p)| reciprocal_rank(r, p)).sum::<f64>() / suite.len() as f64
}

/// Mean average precision over queries; 0 for an empty suite.
pub fn mean_average_precision<S: AsRef<str>>(suite: &[(Vec<S>, HashSet<String>)]) -> f64 {
    if suite.is_empty() {
        return 0.0;
    }
    suite.iter().map(|(r, p)| average_precision(r, p)).sum::<f64>() / suite.len() as f64
}
