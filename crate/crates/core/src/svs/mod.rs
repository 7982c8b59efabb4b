//! Learned-sparse path: an impact-ordered inverted side for block upper
//! bounds and a forward store for exact scoring of surviving blocks.

use std::collections::HashMap;
use std::path::Path;

use crate::binio::{read_file, write_file, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::fts::check_fingerprint;
use crate::model::{CorpusManifest, DocOrdinal, PathTag, RankedList, SparseVector, TopK};

pub const SVS_MAGIC: &[u8; 4] = b"HSSI";
const SVS_VERSION: u32 = 1;
pub const DEFAULT_BLOCK_SIZE: usize = 8;

const BOUND_SLACK: f64 = 1.0 + 1e-9;

/// Inner product over shared term ids (sorted merge).
pub fn sparse_dot(q: &SparseVector, d: &SparseVector) -> f64 {
    let (a, b) = (q.entries(), d.entries());
    let (mut i, mut j) = (0, 0);
    let mut acc = 0.0f64;
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 as f64 * b[j].1 as f64;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

#[derive(Clone, Debug, Default)]
struct TermImpacts {
    docs: Vec<u32>,
    weights: Vec<f32>,
    /// Blocks (doc-ordinal ranges) in which the term occurs, ascending.
    block_ids: Vec<u32>,
    block_max: Vec<f32>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SvsStats {
    pub blocks_scored: u64,
    pub blocks_total: u64,
    pub blocks_with_bound: u64,
    pub docs_scored: u64,
}

#[derive(Clone, Debug)]
pub struct SvsIndex {
    terms: HashMap<u32, TermImpacts>,
    forward: Vec<SparseVector>,
    block_size: usize,
}

impl SvsIndex {
    pub fn build(vectors: Vec<SparseVector>, block_size: usize) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::InvalidParam("block_size must be positive".into()));
        }
        if vectors.len() > u32::MAX as usize {
            return Err(Error::InvalidParam("collection exceeds 2^32 vectors".into()));
        }
        let mut terms: HashMap<u32, TermImpacts> = HashMap::new();
        for (ord, v) in vectors.iter().enumerate() {
            let block = (ord / block_size) as u32;
            for &(t, w) in v.entries() {
                let imp = terms.entry(t).or_default();
                imp.docs.push(ord as u32);
                imp.weights.push(w);
                match imp.block_ids.last() {
                    Some(&b) if b == block => {
                        let m = imp.block_max.last_mut().unwrap();
                        *m = m.max(w);
                    }
                    _ => {
                        imp.block_ids.push(block);
                        imp.block_max.push(w);
                    }
                }
            }
        }
        Ok(Self {
            terms,
            forward: vectors,
            block_size,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.forward.len()
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn num_blocks(&self) -> usize {
        self.forward.len().div_ceil(self.block_size)
    }

    pub fn vector(&self, doc: DocOrdinal) -> &SparseVector {
        &self.forward[doc.index()]
    }

    /// `(doc, weight)` impacts of `term`, ascending by doc.
    pub fn impacts(&self, term: u32) -> Vec<(DocOrdinal, f32)> {
        self.terms.get(&term).map_or_else(Vec::new, |imp| {
            imp.docs
                .iter()
                .zip(&imp.weights)
                .map(|(&d, &w)| (DocOrdinal(d), w))
                .collect()
        })
    }

    /// `(block id, max weight)` pairs of `term`.
    pub fn block_maxima(&self, term: u32) -> Vec<(usize, f32)> {
        self.terms.get(&term).map_or_else(Vec::new, |imp| {
            imp.block_ids
                .iter()
                .zip(&imp.block_max)
                .map(|(&b, &m)| (b as usize, m))
                .collect()
        })
    }

    /// Upper bound on `q · d` for every document in each block.
    pub fn block_bounds(&self, q: &SparseVector) -> Vec<f64> {
        let mut bounds = vec![0.0f64; self.num_blocks()];
        for &(t, qw) in q.entries() {
            if let Some(imp) = self.terms.get(&t) {
                for (&b, &m) in imp.block_ids.iter().zip(&imp.block_max) {
                    bounds[b as usize] += qw as f64 * m as f64;
                }
            }
        }
        bounds
    }

    pub fn topk(&self, q: &SparseVector, k: usize) -> RankedList {
        self.topk_with_stats(q, k, 1.0).0
    }

    /// Block-Max Pruning. `alpha = 1` is exact; `alpha > 1` scales the
    /// threshold used to discard blocks and may lose results.
    pub fn topk_with_stats(
        &self,
        q: &SparseVector,
        k: usize,
        alpha: f64,
    ) -> (RankedList, SvsStats) {
        let mut stats = SvsStats {
            blocks_total: self.num_blocks() as u64,
            ..SvsStats::default()
        };
        let mut top = TopK::new(k);
        if k == 0 || self.forward.is_empty() {
            return (top.into_ranked(PathTag::Svs), stats);
        }
        let bounds = self.block_bounds(q);
        let mut order: Vec<(u32, f64)> = bounds
            .iter()
            .enumerate()
            .filter(|&(_, &ub)| ub > 0.0)
            .map(|(b, &ub)| (b as u32, ub))
            .collect();
        stats.blocks_with_bound = order.len() as u64;
        order.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

        for (block, bound) in order {
            if let Some(th) = top.threshold() {
                if bound * BOUND_SLACK < alpha * th {
                    break;
                }
            }
            stats.blocks_scored += 1;
            let start = block as usize * self.block_size;
            let end = (start + self.block_size).min(self.forward.len());
            for d in start..end {
                let s = sparse_dot(q, &self.forward[d]);
                stats.docs_scored += 1;
                if s > 0.0 {
                    top.push(DocOrdinal(d as u32), s);
                }
            }
        }
        (top.into_ranked(PathTag::Svs), stats)
    }

    /// Layout: header, fingerprint, block size, then the forward store in
    /// `.svec` record form. The inverted side is rebuilt on load.
    pub fn to_bytes(&self, manifest: &CorpusManifest) -> Vec<u8> {
        let mut w = ByteWriter::header(SVS_MAGIC, SVS_VERSION);
        w.u64(manifest.fingerprint());
        w.u32(self.block_size as u32);
        w.u64(self.forward.len() as u64);
        for v in &self.forward {
            w.u32(v.nnz() as u32);
            for &(t, x) in v.entries() {
                w.u32(t);
                w.f32(x);
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8], manifest: &CorpusManifest) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.header(SVS_MAGIC, SVS_VERSION)?;
        check_fingerprint(r.u64()?, manifest)?;
        let block_size = r.u32()? as usize;
        let count = r.len_prefix()?;
        if count != manifest.doc_count() {
            return Err(Error::DimMismatch {
                expected: manifest.doc_count(),
                found: count,
            });
        }
        let mut forward = Vec::with_capacity(count);
        for _ in 0..count {
            let nnz = r.u32()? as usize;
            let mut entries = Vec::with_capacity(nnz.min(1 << 16));
            for _ in 0..nnz {
                entries.push((r.u32()?, r.f32()?));
            }
            forward.push(SparseVector::new(entries)?);
        }
        Self::build(forward, block_size)
    }

    pub fn save(&self, path: &Path, manifest: &CorpusManifest) -> Result<()> {
        write_file(path, &self.to_bytes(manifest))
    }

    pub fn load(path: &Path, manifest: &CorpusManifest) -> Result<Self> {
        Self::from_bytes(&read_file(path)?, manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(pairs: &[(u32, f32)]) -> SparseVector {
        SparseVector::new(pairs.to_vec()).unwrap()
    }

    #[test]
    fn hand_dot_product() {
        let q = sv(&[(1, 2.0), (3, 1.0)]);
        let d = sv(&[(3, 4.0), (7, 5.0)]);
        assert_eq!(sparse_dot(&q, &d), 4.0);
        assert_eq!(sparse_dot(&d, &q), 4.0);
        assert_eq!(sparse_dot(&sv(&[(1, 1.0)]), &sv(&[(2, 1.0)])), 0.0);
    }

    #[test]
    fn two_vector_index() {
        let idx = SvsIndex::build(vec![sv(&[(1, 0.5)]), sv(&[(1, 0.25)])], 8).unwrap();
        assert_eq!(
            idx.impacts(1),
            vec![(DocOrdinal(0), 0.5), (DocOrdinal(1), 0.25)]
        );
        assert_eq!(idx.block_maxima(1), vec![(0, 0.5)]);
        let top = idx.topk(&sv(&[(1, 1.0)]), 1);
        assert_eq!(top.hits.len(), 1);
        assert_eq!(top.hits[0].doc, DocOrdinal(0));
        assert_eq!(top.hits[0].score, 0.5);
        assert!(idx.topk(&sv(&[(99, 1.0)]), 3).is_empty());
    }

    #[test]
    fn unit_blocks_equal_weights() {
        let vs = vec![sv(&[(1, 0.5)]), sv(&[(1, 0.25), (2, 1.0)]), sv(&[(1, 0.75)])];
        let idx = SvsIndex::build(vs, 1).unwrap();
        assert_eq!(idx.block_maxima(1), vec![(0, 0.5), (1, 0.25), (2, 0.75)]);
    }

    #[test]
    fn empty_collection() {
        let idx = SvsIndex::build(Vec::new(), 8).unwrap();
        assert_eq!(idx.num_blocks(), 0);
        assert!(idx.topk(&sv(&[(1, 1.0)]), 5).is_empty());
    }

    #[test]
    fn zero_block_size_rejected() {
        assert!(SvsIndex::build(Vec::new(), 0).is_err());
    }
}
