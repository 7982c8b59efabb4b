//! Ranking and latency metrics.

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::model::DocOrdinal;

/// nDCG@k with gain `2^rel - 1`. Returns `None` when the query has no
/// relevant documents; such queries are left out of means.
pub fn ndcg_at_k<S: AsRef<str>>(ranking: &[S], rels: &HashMap<String, u32>, k: usize) -> Option<f64> {
    let mut ideal: Vec<u32> = rels.values().copied().filter(|&r| r > 0).collect();
    if ideal.is_empty() || k == 0 {
        return None;
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal.iter().take(k).enumerate().map(|(i, &r)| gain(r) / discount(i)).sum();
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, id)| gain(rels.get(id.as_ref()).copied().unwrap_or(0)) / discount(i))
        .sum();
    Some(dcg / idcg)
}

fn gain(rel: u32) -> f64 {
    2f64.powi(rel as i32) - 1.0
}

fn discount(i: usize) -> f64 {
    ((i + 2) as f64).log2()
}

/// Mean of the defined values; 0 when none is defined.
pub fn mean_defined(values: &[Option<f64>]) -> f64 {
    let v: Vec<f64> = values.iter().flatten().copied().collect();
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Fraction of the true top-k found in the first k results.
pub fn recall_at_k(found: &[DocOrdinal], truth: &[DocOrdinal], k: usize) -> f64 {
    let truth = &truth[..truth.len().min(k)];
    if truth.is_empty() {
        return 1.0;
    }
    let hits = found.iter().take(k).filter(|d| truth.contains(d)).count();
    hits as f64 / truth.len() as f64
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    /// Coefficient of variation across samples.
    pub cv: f64,
}

impl LatencyStats {
    pub fn from_samples(samples: &[Duration]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        ms.sort_by(f64::total_cmp);
        let n = ms.len() as f64;
        let mean = ms.iter().sum::<f64>() / n;
        let var = ms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean_ms: mean,
            p50_ms: percentile(&ms, 0.50),
            p95_ms: percentile(&ms, 0.95),
            cv: if mean > 0.0 { var.sqrt() / mean } else { 0.0 },
        }
    }
}

/// Nearest-rank percentile of sorted values.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}
