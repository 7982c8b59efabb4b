//! Cross-path fusion of ranked candidate lists.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DocOrdinal, PathTag, RankedList, ScoredHit, TokenTensor};
use crate::tens::{maxsim, TensorStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FusionMethod {
    Rrf,
    Ws,
    Trf,
}

impl FusionMethod {
    pub const ALL: [FusionMethod; 3] = [FusionMethod::Rrf, FusionMethod::Ws, FusionMethod::Trf];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMethod::Rrf => "RRF",
            FusionMethod::Ws => "WS",
            FusionMethod::Trf => "TRF",
        }
    }
}

impl fmt::Display for FusionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RRF" => Ok(FusionMethod::Rrf),
            "WS" => Ok(FusionMethod::Ws),
            "TRF" => Ok(FusionMethod::Trf),
            _ => Err(Error::Config(format!("unknown fusion method {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    Minmax,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub method: FusionMethod,
    pub kappa: f64,
    /// Per-path WS weights. `None` means uniform; paths missing from the map get 0.
    pub weights: Option<BTreeMap<PathTag, f64>>,
    pub normalization: Normalization,
    pub k0: usize,
    pub k: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            method: FusionMethod::Rrf,
            kappa: 60.0,
            weights: None,
            normalization: Normalization::Minmax,
            k0: 100,
            k: 10,
        }
    }
}

impl FusionConfig {
    pub fn with_method(method: FusionMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self, n_paths: usize) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidParam(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if self.k == 0 || self.k0 == 0 {
            return Err(Error::InvalidParam("k and k0 must be positive".into()));
        }
        if self.k > self.k0 * n_paths.max(1) {
            return Err(Error::InvalidParam(format!(
                "k={} exceeds k0*n_paths={}",
                self.k,
                self.k0 * n_paths.max(1)
            )));
        }
        if let Some(w) = &self.weights {
            if w.values().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::InvalidParam("weights must be finite and >= 0".into()));
            }
            if !w.values().any(|x| *x > 0.0) {
                return Err(Error::InvalidParam("at least one weight must be > 0".into()));
            }
        }
        Ok(())
    }

    /// WS weights aligned with `paths`.
    pub fn weights_for(&self, paths: &[PathTag]) -> Vec<f64> {
        match &self.weights {
            None => vec![1.0 / paths.len().max(1) as f64; paths.len()],
            Some(w) => paths.iter().map(|p| w.get(p).copied().unwrap_or(0.0)).collect(),
        }
    }
}

/// Reciprocal rank fusion; documents absent from a list get nothing from it.
pub fn rrf_fuse(lists: &[RankedList], kappa: f64, k: usize) -> RankedList {
    let mut acc: BTreeMap<DocOrdinal, f64> = BTreeMap::new();
    for list in lists {
        for (i, hit) in list.hits.iter().enumerate() {
            *acc.entry(hit.doc).or_insert(0.0) += 1.0 / (kappa + (i + 1) as f64);
        }
    }
    collect(acc, k)
}

/// Weighted sum of per-list scores, optionally min-max normalized per list.
/// Lists with weight 0 are ignored entirely.
pub fn ws_fuse(
    lists: &[RankedList],
    weights: &[f64],
    normalization: Normalization,
    k: usize,
) -> Result<RankedList> {
    if weights.len() != lists.len() {
        return Err(Error::InvalidParam(format!(
            "{} weights for {} lists",
            weights.len(),
            lists.len()
        )));
    }
    let mut acc: BTreeMap<DocOrdinal, f64> = BTreeMap::new();
    for (list, &w) in lists.iter().zip(weights) {
        if w == 0.0 || list.is_empty() {
            continue;
        }
        let (lo, hi) = list
            .hits
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), h| {
                (lo.min(h.score), hi.max(h.score))
            });
        for hit in &list.hits {
            let s = match normalization {
                Normalization::None => hit.score,
                Normalization::Minmax if hi > lo => (hit.score - lo) / (hi - lo),
                Normalization::Minmax => 1.0,
            };
            *acc.entry(hit.doc).or_insert(0.0) += w * s;
        }
    }
    Ok(collect(acc, k))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrfStats {
    pub candidates: usize,
    pub tensors_loaded: usize,
}

/// Deduplicated union of the lists' documents in ascending ordinal order.
pub fn candidate_union(lists: &[RankedList]) -> Vec<DocOrdinal> {
    let set: BTreeSet<DocOrdinal> = lists.iter().flat_map(|l| l.hits.iter().map(|h| h.doc)).collect();
    set.into_iter().collect()
}

/// Re-scores the candidate union with exact MaxSim, loading only candidate tensors.
pub fn trf_rerank(
    lists: &[RankedList],
    query: &TokenTensor,
    store: &TensorStore,
    k: usize,
) -> Result<(RankedList, TrfStats)> {
    let union = candidate_union(lists);
    let mut stats = TrfStats {
        candidates: union.len(),
        tensors_loaded: 0,
    };
    let mut hits = Vec::with_capacity(union.len());
    for doc in union {
        let d = store.get(doc)?;
        stats.tensors_loaded += 1;
        hits.push(ScoredHit::new(doc, maxsim(query, &d)?));
    }
    Ok((RankedList::from_unsorted(PathTag::Fused, hits, k), stats))
}

fn collect(acc: BTreeMap<DocOrdinal, f64>, k: usize) -> RankedList {
    let hits = acc.into_iter().map(|(d, s)| ScoredHit::new(d, s)).collect();
    RankedList::from_unsorted(PathTag::Fused, hits, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(path: PathTag, items: &[(u32, f64)]) -> RankedList {
        RankedList {
            path,
            hits: items.iter().map(|&(d, s)| ScoredHit::new(DocOrdinal(d), s)).collect(),
        }
    }

    #[test]
    fn rrf_rank_one_in_two_lists() {
        let a = list(PathTag::Fts, &[(7, 3.0)]);
        let b = list(PathTag::Dvs, &[(7, 0.9)]);
        let out = rrf_fuse(&[a, b], 60.0, 10);
        assert!((out.hits[0].score - 2.0 / 61.0).abs() < 1e-12);
    }

    #[test]
    fn rrf_consensus_beats_single_top() {
        let a = list(PathTag::Fts, &[(1, 9.0), (2, 8.0)]);
        let b = list(PathTag::Dvs, &[(3, 0.9), (2, 0.8)]);
        let out = rrf_fuse(&[a, b], 60.0, 10);
        assert_eq!(out.hits[0].doc, DocOrdinal(2));
        assert!((out.hits[0].score - 2.0 / 62.0).abs() < 1e-12);
        assert!((out.hits[1].score - 1.0 / 61.0).abs() < 1e-12);
        // docs 1 and 3 tie at 1/61 and break by ordinal
        assert_eq!(out.docs(), vec![DocOrdinal(2), DocOrdinal(1), DocOrdinal(3)]);
    }

    #[test]
    fn rrf_single_list_keeps_order() {
        let a = list(PathTag::Fts, &[(5, 3.0), (1, 2.0), (9, 1.0)]);
        let out = rrf_fuse(std::slice::from_ref(&a), 60.0, 10);
        assert_eq!(out.docs(), a.docs());
    }

    #[test]
    fn ws_absent_contributes_zero() {
        let a = list(PathTag::Fts, &[(1, 5.0), (2, 1.0)]);
        let b = list(PathTag::Dvs, &[(3, 0.7), (2, 0.2)]);
        let out = ws_fuse(&[a, b], &[0.5, 0.5], Normalization::Minmax, 10).unwrap();
        let score = |d| out.hits.iter().find(|h| h.doc == DocOrdinal(d)).unwrap().score;
        assert_eq!(score(1), 0.5);
        assert_eq!(score(3), 0.5);
        assert_eq!(score(2), 0.0);
    }

    #[test]
    fn ws_constant_list_normalizes_to_one() {
        let a = list(PathTag::Fts, &[(4, 2.0), (8, 2.0)]);
        let out = ws_fuse(&[a], &[1.0], Normalization::Minmax, 10).unwrap();
        assert!(out.hits.iter().all(|h| h.score == 1.0));
        assert_eq!(out.docs(), vec![DocOrdinal(4), DocOrdinal(8)]);
    }

    #[test]
    fn ws_degenerate_weight_returns_first_list() {
        let a = list(PathTag::Fts, &[(5, 3.0), (1, 2.0), (9, 1.0)]);
        let b = list(PathTag::Dvs, &[(2, 3.0), (9, 2.0), (0, 1.0)]);
        let out = ws_fuse(&[a.clone(), b], &[1.0, 0.0], Normalization::Minmax, 2).unwrap();
        assert_eq!(out.docs(), a.truncated(2).docs());
    }

    #[test]
    fn ws_weight_count_mismatch() {
        let a = list(PathTag::Fts, &[(5, 3.0)]);
        assert!(ws_fuse(&[a], &[1.0, 1.0], Normalization::None, 2).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = FusionConfig::default();
        assert!(c.validate(1).is_ok());
        c.kappa = 0.0;
        assert!(c.validate(1).is_err());
        c = FusionConfig {
            k: 201,
            ..FusionConfig::default()
        };
        assert!(c.validate(2).is_err());
        assert!(c.validate(3).is_ok());
        c = FusionConfig {
            weights: Some([(PathTag::Fts, 0.0)].into_iter().collect()),
            ..FusionConfig::default()
        };
        assert!(c.validate(1).is_err());
    }

    #[test]
    fn weights_default_uniform_and_missing_zero() {
        let c = FusionConfig::default();
        assert_eq!(c.weights_for(&[PathTag::Fts, PathTag::Dvs]), vec![0.5, 0.5]);
        let c = FusionConfig {
            weights: Some([(PathTag::Dvs, 2.0)].into_iter().collect()),
            ..FusionConfig::default()
        };
        assert_eq!(c.weights_for(&[PathTag::Fts, PathTag::Dvs]), vec![0.0, 2.0]);
    }

    #[test]
    fn trf_singleton_and_missing() {
        let t = TokenTensor::new(2, vec![1.0, 0.0]).unwrap();
        let store = TensorStore::from_tensors(2, std::slice::from_ref(&t)).unwrap();
        let a = list(PathTag::Fts, &[(0, 42.0)]);
        let (out, stats) = trf_rerank(&[a], &t, &store, 10).unwrap();
        assert_eq!(out.hits, vec![ScoredHit::new(DocOrdinal(0), 1.0)]);
        assert_eq!(stats.tensors_loaded, 1);
        let bad = list(PathTag::Fts, &[(3, 1.0)]);
        assert!(matches!(trf_rerank(&[bad], &t, &store, 10), Err(Error::MissingTensor(3))));
    }

    #[test]
    fn method_parse() {
        assert_eq!("trf".parse::<FusionMethod>().unwrap(), FusionMethod::Trf);
        assert!("xyz".parse::<FusionMethod>().is_err());
    }
}
