use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;

pub const STAGE_RETRIEVE: &str = "retrieve";
pub const STAGE_HINTS: &str = "hints";
pub const STAGE_RERANK: &str = "rerank";

/// Wall-clock timing of one query, with per-stage durations in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySample {
    pub query_id: String,
    pub seconds: f64,
    pub stages: BTreeMap<String, f64>,
}

impl LatencySample {
    pub fn stage(&self, name: &str) -> f64 {
        self.stages.get(name).copied().unwrap_or(0.0)
    }

    /// Retrieval and hints run side by side, so the critical path is the
    /// slower of the two followed by rerank; that path never exceeds the total.
    pub fn critical_path(&self) -> f64 {
        self.stage(STAGE_RETRIEVE).max(self.stage(STAGE_HINTS)) + self.stage(STAGE_RERANK)
    }

    pub fn is_consistent(&self) -> bool {
        self.seconds > 0.0 && self.critical_path() <= self.seconds + 1e-6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub n: usize,
    pub avg: f64,
    pub p5: f64,
    pub p95: f64,
}

/// Nearest-rank percentile: the `ceil(p/100 * n)`-th smallest value.
pub fn percentile_nearest_rank(sorted: &[f64], p: u32) -> f64 {
    assert!(!sorted.is_empty() && p <= 100);
    let n = sorted.len();
    let rank = ((p as usize * n).div_ceil(100)).max(1);
    sorted[rank - 1]
}

pub fn latency_stats(samples: &[f64]) -> Result<LatencyStats, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptySamples);
    }
    if let Some(x) = samples.iter().find(|x| !x.is_finite()) {
        return Err(EvalError::InvalidArgument(format!("non-finite latency {x}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(LatencyStats {
        n: samples.len(),
        avg: samples.iter().sum::<f64>() / samples.len() as f64,
        p5: percentile_nearest_rank(&sorted, 5),
        p95: percentile_nearest_rank(&sorted, 95),
    })
}

/// Stats over the total time of each sample.
pub fn sample_stats(samples: &[LatencySample]) -> Result<LatencyStats, EvalError> {
    latency_stats(&samples.iter().map(|s| s.seconds).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_grid_and_single() {
        let grid: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = latency_stats(&grid).unwrap();
        assert_eq!((s.p5, s.p95, s.avg), (5.0, 95.0, 50.5));
        let one = latency_stats(&[0.25]).unwrap();
        assert_eq!((one.avg, one.p5, one.p95), (0.25, 0.25, 0.25));
        assert!(matches!(latency_stats(&[]), Err(EvalError::EmptySamples)));
    }

    /// Smallest sample v with at least p% of the samples <= v.
    fn oracle(xs: &[f64], p: usize) -> f64 {
        let mut candidates = xs.to_vec();
        candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
        *candidates
            .iter()
            .find(|v| xs.iter().filter(|x| x <= v).count() * 100 >= p * xs.len())
            .unwrap()
    }

    proptest! {
        #[test]
        fn matches_order_statistic(xs in prop::collection::vec(0.0f64..10.0, 1..300)) {
            let s = latency_stats(&xs).unwrap();
            prop_assert_eq!(s.p5, oracle(&xs, 5));
            prop_assert_eq!(s.p95, oracle(&xs, 95));
        }
    }
}
