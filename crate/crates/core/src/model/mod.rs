//! Domain types shared by every retrieval path.

mod corpus;
mod formats;
mod topk;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use corpus::{load_corpus, read_records, CorpusManifest, CorpusRecord};
pub use formats::{
    decode_dense, decode_sparse, decode_tensors, encode_dense, encode_sparse, encode_tensors,
    read_dense, read_sparse, read_tensors, read_vectors, write_dense, write_sparse, write_tensors,
    VectorCollection, VectorKind, DENSE_MAGIC, SPARSE_MAGIC, TENSOR_MAGIC,
};
pub use topk::TopK;

/// Dense internal document number, assigned in corpus ingestion order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DocOrdinal(pub u32);

impl DocOrdinal {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for DocOrdinal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Which retrieval path produced a list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PathTag {
    Fts,
    Svs,
    Dvs,
    Tens,
    Fused,
}

impl PathTag {
    /// The four scan paths, in canonical plan order.
    pub const SCANS: [PathTag; 4] = [PathTag::Fts, PathTag::Svs, PathTag::Dvs, PathTag::Tens];

    pub fn as_str(self) -> &'static str {
        match self {
            PathTag::Fts => "FTS",
            PathTag::Svs => "SVS",
            PathTag::Dvs => "DVS",
            PathTag::Tens => "TENS",
            PathTag::Fused => "FUSED",
        }
    }
}

impl fmt::Display for PathTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PathTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FTS" => Ok(PathTag::Fts),
            "SVS" => Ok(PathTag::Svs),
            "DVS" => Ok(PathTag::Dvs),
            "TENS" => Ok(PathTag::Tens),
            "FUSED" => Ok(PathTag::Fused),
            other => Err(Error::Config(format!("unknown path {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub doc: DocOrdinal,
    pub score: f64,
}

impl ScoredHit {
    pub fn new(doc: DocOrdinal, score: f64) -> Self {
        Self { doc, score }
    }

    /// Global result order: score descending, then ordinal ascending.
    #[inline]
    pub fn rank_cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.doc.cmp(&other.doc))
    }
}

/// Candidates from one path (or the fused output), best first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub path: PathTag,
    pub hits: Vec<ScoredHit>,
}

impl RankedList {
    pub fn empty(path: PathTag) -> Self {
        Self {
            path,
            hits: Vec::new(),
        }
    }

    /// Sorts `hits` into the global order and keeps the best `k`.
    ///
    /// Callers must not pass duplicate ordinals.
    pub fn from_unsorted(path: PathTag, mut hits: Vec<ScoredHit>, k: usize) -> Self {
        hits.sort_by(ScoredHit::rank_cmp);
        hits.truncate(k);
        debug_assert!(Self::unique_docs(&hits));
        Self { path, hits }
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn docs(&self) -> Vec<DocOrdinal> {
        self.hits.iter().map(|h| h.doc).collect()
    }

    /// 1-based rank of `doc`, if present.
    pub fn rank_of(&self, doc: DocOrdinal) -> Option<usize> {
        self.hits.iter().position(|h| h.doc == doc).map(|p| p + 1)
    }

    pub fn truncated(mut self, k: usize) -> Self {
        self.hits.truncate(k);
        self
    }

    /// Checks the ordering and uniqueness invariants.
    pub fn is_well_formed(&self) -> bool {
        self.hits.iter().all(|h| h.score.is_finite())
            && self
                .hits
                .windows(2)
                .all(|w| w[0].rank_cmp(&w[1]) == std::cmp::Ordering::Less)
            && Self::unique_docs(&self.hits)
    }

    fn unique_docs(hits: &[ScoredHit]) -> bool {
        let mut docs: Vec<u32> = hits.iter().map(|h| h.doc.0).collect();
        docs.sort_unstable();
        docs.windows(2).all(|w| w[0] != w[1])
    }
}

/// Per-term weights, ascending by term id, zero weights removed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(u32, f32)>,
}

impl SparseVector {
    /// Validates a pre-sorted entry list. Zero weights are dropped.
    pub fn new(entries: Vec<(u32, f32)>) -> Result<Self> {
        for w in entries.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::InvalidVector(format!(
                    "term ids not strictly increasing: {} then {}",
                    w[0].0, w[1].0
                )));
            }
        }
        for &(t, v) in &entries {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidVector(format!(
                    "term {t} has invalid weight {v}"
                )));
            }
        }
        Ok(Self {
            entries: entries.into_iter().filter(|&(_, v)| v > 0.0).collect(),
        })
    }

    /// Sorts, sums duplicate term ids and validates.
    pub fn from_pairs(mut pairs: Vec<(u32, f32)>) -> Result<Self> {
        pairs.sort_by_key(|&(t, _)| t);
        let mut merged: Vec<(u32, f32)> = Vec::with_capacity(pairs.len());
        for (t, v) in pairs {
            match merged.last_mut() {
                Some(last) if last.0 == t => last.1 += v,
                _ => merged.push((t, v)),
            }
        }
        Self::new(merged)
    }

    pub fn entries(&self) -> &[(u32, f32)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseVector {
    values: Vec<f32>,
}

impl DenseVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidVector(format!(
                "non-finite component at index {i}"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn dot(&self, other: &[f32]) -> f64 {
        dot_f64(&self.values, other)
    }
}

/// A variable-length matrix of unit-norm token embeddings, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenTensor {
    dim: usize,
    data: Vec<f32>,
}

/// Accepted deviation of a row's L2 norm from 1.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-3;

impl TokenTensor {
    /// Validates shape, finiteness and unit-norm rows.
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        let t = Self::check_shape(dim, data)?;
        for (i, row) in t.rows().enumerate() {
            let norm = dot_f64(row, row).sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::InvalidVector(format!(
                    "token {i} has norm {norm:.6}, expected unit norm"
                )));
            }
        }
        Ok(t)
    }

    /// Builds a tensor from raw rows, normalizing each one.
    pub fn normalized(dim: usize, mut data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidVector("dim must be positive".into()));
        }
        for (i, row) in data.chunks_mut(dim).enumerate() {
            let norm = dot_f64(row, row).sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::InvalidVector(format!(
                    "token {i} cannot be normalized (norm {norm})"
                )));
            }
            for v in row.iter_mut() {
                *v = (*v as f64 / norm) as f32;
            }
        }
        Self::check_shape(dim, data)
    }

    fn check_shape(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidVector("dim must be positive".into()));
        }
        if data.is_empty() {
            return Err(Error::InvalidVector("tensor has no tokens".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidVector(format!(
                "payload length {} is not a multiple of dim {dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidVector(format!(
                "non-finite component at flat index {i}"
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_tokens(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }
}

/// Inner product of two f32 slices, accumulated in f64.
#[inline]
pub fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] as f64 * y[l] as f64;
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += *x as f64 * *y as f64;
    }
    s
}

/// Inner product in f32, for approximate scoring and clustering.
#[inline]
pub fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s: f32 = acc.iter().sum();
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}
