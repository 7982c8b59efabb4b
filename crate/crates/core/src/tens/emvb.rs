//! Three-stage multi-vector search: centroid bit-vector pre-filter, PQ
//! approximate MaxSim over survivors, exact MaxSim re-scoring.

use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kmeans;
use super::{maxsim, TensorStore};
use crate::binio::{read_file, write_file, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::fts::check_fingerprint;
use crate::model::{dot_f32, CorpusManifest, DocOrdinal, PathTag, RankedList, TokenTensor, TopK};

pub const EMVB_MAGIC: &[u8; 4] = b"HSEM";
const EMVB_VERSION: u32 = 1;
const PQ_CENTERS: usize = 256;
pub const KMEANS_ITERS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmvbParams {
    /// `None` picks a size from the token count (see [`default_centroids`]).
    pub n_centroids: Option<usize>,
    pub n_subspaces: usize,
    /// k-means training sample per centroid; the full token set is used when smaller.
    pub train_per_centroid: usize,
}

impl Default for EmvbParams {
    fn default() -> Self {
        Self {
            n_centroids: None,
            n_subspaces: 8,
            train_per_centroid: 16,
        }
    }
}

impl EmvbParams {
    /// Settings used for full-scale collections.
    pub fn large_scale() -> Self {
        Self {
            n_centroids: Some(8192),
            n_subspaces: 32,
            train_per_centroid: 16,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmvbSearchParams {
    /// Nearest centroids kept per query token in the pre-filter.
    pub centroid_probes: usize,
    /// Centroids a document must share with the query to survive the filter.
    pub min_shared: usize,
    pub n_probe_docs: usize,
    pub filter: bool,
}

impl Default for EmvbSearchParams {
    fn default() -> Self {
        Self {
            centroid_probes: 4,
            min_shared: 1,
            n_probe_docs: 100,
            filter: true,
        }
    }
}

/// Centroid count for desk-scale collections: the power of two at or below
/// `4 * sqrt(total_tokens)`, capped at 8192 and at the token count.
pub fn default_centroids(total_tokens: usize) -> usize {
    let target = (4.0 * (total_tokens as f64).sqrt()).max(1.0) as usize;
    let pow2 = 1usize << (usize::BITS - 1 - target.leading_zeros());
    pow2.min(8192).min(total_tokens).max(1)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EmvbStats {
    pub candidates: u64,
    pub rescored: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmvbIndex {
    dim: usize,
    n_centroids: usize,
    n_subspaces: usize,
    pq_centers: usize,
    centroids: Vec<f32>,
    token_start: Vec<u64>,
    assignments: Vec<u32>,
    words: usize,
    bitvectors: Vec<u64>,
    /// subspace -> center -> sub_dim floats
    codebooks: Vec<f32>,
    codes: Vec<u8>,
}

impl EmvbIndex {
    pub fn build(store: &TensorStore, params: EmvbParams, seed: u64) -> Result<Self> {
        let dim = store.dim();
        let total = store.total_tokens() as usize;
        if params.n_subspaces == 0 || !dim.is_multiple_of(params.n_subspaces) {
            return Err(Error::InvalidParam(format!(
                "dim {dim} is not divisible by n_subspaces {}",
                params.n_subspaces
            )));
        }
        let n_centroids = params.n_centroids.unwrap_or_else(|| default_centroids(total));
        if n_centroids == 0 || n_centroids > total {
            return Err(Error::InvalidParam(format!(
                "n_centroids {n_centroids} must be in 1..={total} (total tokens)"
            )));
        }
        let mut tokens = Vec::with_capacity(total * dim);
        for i in 0..store.len() {
            tokens.extend_from_slice(store.get(DocOrdinal(i as u32))?.as_flat());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let train_n = (params.train_per_centroid.max(1) * n_centroids).min(total);
        let training = sample_rows(&tokens, dim, train_n, &mut rng);
        let centroids = kmeans::train(&training, dim, n_centroids, KMEANS_ITERS, &mut rng);
        let assignments = kmeans::assign(&tokens, dim, &centroids);

        let mut residuals = tokens;
        for (row, &c) in residuals.chunks_exact_mut(dim).zip(&assignments) {
            let cen = &centroids[c as usize * dim..(c as usize + 1) * dim];
            for (r, x) in row.iter_mut().zip(cen) {
                *r -= x;
            }
        }

        let n_sub = params.n_subspaces;
        let sub_dim = dim / n_sub;
        let pq_centers = PQ_CENTERS.min(total);
        let pq_train_n = (PQ_CENTERS * params.train_per_centroid.max(1)).min(total);
        let pq_rows = sample_row_ids(total, pq_train_n, &mut rng);
        let mut codebooks = Vec::with_capacity(n_sub * pq_centers * sub_dim);
        let mut codes = vec![0u8; total * n_sub];
        for s in 0..n_sub {
            let sub = |row: usize| &residuals[row * dim + s * sub_dim..row * dim + (s + 1) * sub_dim];
            let train: Vec<f32> = pq_rows.iter().flat_map(|&r| sub(r).iter().copied()).collect();
            let book = kmeans::train(&train, sub_dim, pq_centers, KMEANS_ITERS, &mut rng);
            let norms: Vec<f32> = book.chunks_exact(sub_dim).map(|c| dot_f32(c, c)).collect();
            for row in 0..total {
                codes[row * n_sub + s] = kmeans::nearest(sub(row), &book, &norms, sub_dim).0 as u8;
            }
            codebooks.extend_from_slice(&book);
        }

        let words = n_centroids.div_ceil(64);
        let mut bitvectors = vec![0u64; store.len() * words];
        let token_start = store.token_starts().to_vec();
        for d in 0..store.len() {
            let bits = &mut bitvectors[d * words..(d + 1) * words];
            for &c in &assignments[token_start[d] as usize..token_start[d + 1] as usize] {
                bits[c as usize / 64] |= 1 << (c % 64);
            }
        }
        Ok(Self {
            dim,
            n_centroids,
            n_subspaces: n_sub,
            pq_centers,
            centroids,
            token_start,
            assignments,
            words,
            bitvectors,
            codebooks,
            codes,
        })
    }

    pub fn n_centroids(&self) -> usize {
        self.n_centroids
    }

    pub fn n_subspaces(&self) -> usize {
        self.n_subspaces
    }

    pub fn doc_count(&self) -> usize {
        self.token_start.len() - 1
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    /// Centroid ids assigned to the tokens of `doc`.
    pub fn doc_assignments(&self, doc: DocOrdinal) -> &[u32] {
        let (a, b) = self.doc_range(doc);
        &self.assignments[a..b]
    }

    pub fn doc_has_centroid(&self, doc: DocOrdinal, centroid: usize) -> bool {
        self.bitvectors[doc.index() * self.words + centroid / 64] & (1 << (centroid % 64)) != 0
    }

    fn doc_range(&self, doc: DocOrdinal) -> (usize, usize) {
        (
            self.token_start[doc.index()] as usize,
            self.token_start[doc.index() + 1] as usize,
        )
    }

    fn sub_dim(&self) -> usize {
        self.dim / self.n_subspaces
    }

    /// Centroid plus decoded residual for one stored token.
    pub fn reconstruct(&self, token: usize) -> Vec<f32> {
        let sd = self.sub_dim();
        let c = self.assignments[token] as usize;
        let mut out = self.centroids[c * self.dim..(c + 1) * self.dim].to_vec();
        for s in 0..self.n_subspaces {
            let code = self.codes[token * self.n_subspaces + s] as usize;
            let book = &self.codebooks[(s * self.pq_centers + code) * sd..][..sd];
            for (o, x) in out[s * sd..(s + 1) * sd].iter_mut().zip(book) {
                *o += x;
            }
        }
        out
    }

    /// Mean squared error between stored tokens and their reconstructions.
    pub fn reconstruction_error(&self, store: &TensorStore) -> Result<f64> {
        let mut total = 0.0;
        let mut n = 0usize;
        for d in 0..store.len() {
            let t = store.get(DocOrdinal(d as u32))?;
            let (a, _) = self.doc_range(DocOrdinal(d as u32));
            for (j, row) in t.rows().enumerate() {
                let rec = self.reconstruct(a + j);
                total += row
                    .iter()
                    .zip(&rec)
                    .map(|(x, y)| ((x - y) as f64).powi(2))
                    .sum::<f64>();
                n += 1;
            }
        }
        Ok(total / n.max(1) as f64)
    }

    /// Query-token x centroid similarity table.
    fn centroid_table(&self, q: &TokenTensor) -> Vec<f32> {
        let mut table = Vec::with_capacity(q.n_tokens() * self.n_centroids);
        for qi in q.rows() {
            for c in self.centroids.chunks_exact(self.dim) {
                table.push(dot_f32(qi, c));
            }
        }
        table
    }

    /// Docs sharing at least `min_shared` centroids with the query's top probes.
    pub fn candidates(&self, q: &TokenTensor, params: &EmvbSearchParams) -> Vec<DocOrdinal> {
        let table = self.centroid_table(q);
        self.filter_candidates(&table, q.n_tokens(), params)
    }

    fn filter_candidates(
        &self,
        table: &[f32],
        n_q: usize,
        params: &EmvbSearchParams,
    ) -> Vec<DocOrdinal> {
        if !params.filter {
            return (0..self.doc_count() as u32).map(DocOrdinal).collect();
        }
        let mut mask = vec![0u64; self.words];
        let probes = params.centroid_probes.clamp(1, self.n_centroids);
        let mut order: Vec<u32> = (0..self.n_centroids as u32).collect();
        for i in 0..n_q {
            let row = &table[i * self.n_centroids..(i + 1) * self.n_centroids];
            order.sort_unstable_by(|&a, &b| {
                row[b as usize].total_cmp(&row[a as usize]).then(a.cmp(&b))
            });
            for &c in &order[..probes] {
                mask[c as usize / 64] |= 1 << (c % 64);
            }
        }
        let need = params.min_shared.max(1) as u32;
        (0..self.doc_count())
            .filter(|&d| {
                let bits = &self.bitvectors[d * self.words..(d + 1) * self.words];
                let shared: u32 = bits.iter().zip(&mask).map(|(a, b)| (a & b).count_ones()).sum();
                shared >= need
            })
            .map(|d| DocOrdinal(d as u32))
            .collect()
    }

    pub fn search(
        &self,
        store: &TensorStore,
        q: &TokenTensor,
        k: usize,
        params: &EmvbSearchParams,
    ) -> Result<RankedList> {
        self.search_with_stats(store, q, k, params).map(|(r, _)| r)
    }

    pub fn search_with_stats(
        &self,
        store: &TensorStore,
        q: &TokenTensor,
        k: usize,
        params: &EmvbSearchParams,
    ) -> Result<(RankedList, EmvbStats)> {
        if q.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: q.dim(),
            });
        }
        let mut stats = EmvbStats::default();
        let n_q = q.n_tokens();
        let table = self.centroid_table(q);
        let cands = self.filter_candidates(&table, n_q, params);
        stats.candidates = cands.len() as u64;

        // Per query token, per subspace, per PQ center.
        let sd = self.sub_dim();
        let mut lut = Vec::with_capacity(n_q * self.n_subspaces * self.pq_centers);
        for qi in q.rows() {
            for s in 0..self.n_subspaces {
                let qs = &qi[s * sd..(s + 1) * sd];
                for c in 0..self.pq_centers {
                    lut.push(dot_f32(qs, &self.codebooks[(s * self.pq_centers + c) * sd..][..sd]));
                }
            }
        }

        let mut approx = TopK::new(params.n_probe_docs.max(k));
        let stride = self.n_subspaces * self.pq_centers;
        for &doc in &cands {
            let (a, b) = self.doc_range(doc);
            let mut score = 0f64;
            for i in 0..n_q {
                let crow = &table[i * self.n_centroids..(i + 1) * self.n_centroids];
                let lrow = &lut[i * stride..(i + 1) * stride];
                let mut best = f32::NEG_INFINITY;
                for t in a..b {
                    let mut s = crow[self.assignments[t] as usize];
                    let codes = &self.codes[t * self.n_subspaces..(t + 1) * self.n_subspaces];
                    for (sub, &code) in codes.iter().enumerate() {
                        s += lrow[sub * self.pq_centers + code as usize];
                    }
                    best = best.max(s);
                }
                score += best as f64;
            }
            approx.push(doc, score);
        }

        let mut top = TopK::new(k);
        for hit in approx.into_ranked(PathTag::Tens).hits {
            let d = store.get(hit.doc)?;
            top.push(hit.doc, maxsim(q, &d)?);
            stats.rescored += 1;
        }
        Ok((top.into_ranked(PathTag::Tens), stats))
    }

    pub fn to_bytes(&self, manifest: &CorpusManifest) -> Vec<u8> {
        let mut w = ByteWriter::header(EMVB_MAGIC, EMVB_VERSION);
        w.u64(manifest.fingerprint());
        w.u32(self.dim as u32);
        w.u64(self.doc_count() as u64);
        w.u32(self.n_centroids as u32);
        w.u32(self.n_subspaces as u32);
        w.u32(self.pq_centers as u32);
        w.f32s(&self.centroids);
        for &s in &self.token_start {
            w.u64(s);
        }
        w.u32s(&self.assignments);
        for &b in &self.bitvectors {
            w.u64(b);
        }
        w.f32s(&self.codebooks);
        w.bytes(&self.codes);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8], manifest: &CorpusManifest) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.header(EMVB_MAGIC, EMVB_VERSION)?;
        check_fingerprint(r.u64()?, manifest)?;
        let dim = r.u32()? as usize;
        let n_docs = r.len_prefix()?;
        if n_docs != manifest.doc_count() {
            return Err(Error::DimMismatch {
                expected: manifest.doc_count(),
                found: n_docs,
            });
        }
        let n_centroids = r.u32()? as usize;
        let n_subspaces = r.u32()? as usize;
        let pq_centers = r.u32()? as usize;
        if n_subspaces == 0 || !dim.is_multiple_of(n_subspaces) || pq_centers > PQ_CENTERS {
            return Err(Error::InvalidParam("corrupt EMVB header".into()));
        }
        let centroids = r.f32s(n_centroids * dim)?;
        let mut token_start = Vec::with_capacity(n_docs + 1);
        for _ in 0..=n_docs {
            token_start.push(r.u64()?);
        }
        let total = *token_start.last().unwrap() as usize;
        let assignments = r.u32s(total)?;
        let words = n_centroids.div_ceil(64);
        let mut bitvectors = Vec::with_capacity(n_docs * words);
        for _ in 0..n_docs * words {
            bitvectors.push(r.u64()?);
        }
        let codebooks = r.f32s(n_subspaces * pq_centers * (dim / n_subspaces))?;
        let codes = r.take(total * n_subspaces, "pq codes")?.to_vec();
        Ok(Self {
            dim,
            n_centroids,
            n_subspaces,
            pq_centers,
            centroids,
            token_start,
            assignments,
            words,
            bitvectors,
            codebooks,
            codes,
        })
    }

    pub fn save(&self, path: &Path, manifest: &CorpusManifest) -> Result<()> {
        write_file(path, &self.to_bytes(manifest))
    }

    pub fn load(path: &Path, manifest: &CorpusManifest) -> Result<Self> {
        Self::from_bytes(&read_file(path)?, manifest)
    }

    /// Bytes held in memory by the index arrays.
    pub fn resident_bytes(&self) -> usize {
        self.centroids.len() * 4
            + self.token_start.len() * 8
            + self.assignments.len() * 4
            + self.bitvectors.len() * 8
            + self.codebooks.len() * 4
            + self.codes.len()
    }
}

fn sample_row_ids(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if m >= n {
        return (0..n).collect();
    }
    let mut ids = sample(rng, n, m).into_vec();
    ids.sort_unstable();
    ids
}

fn sample_rows(data: &[f32], dim: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = data.len() / dim;
    sample_row_ids(n, m, rng)
        .into_iter()
        .flat_map(|i| data[i * dim..(i + 1) * dim].iter().copied())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_centroid_rule() {
        assert_eq!(default_centroids(1), 1);
        assert_eq!(default_centroids(12_000), 256);
        assert_eq!(default_centroids(120_000), 1024);
        assert_eq!(default_centroids(10_000_000_000), 8192);
    }

    #[test]
    fn rejects_infeasible_parameters() {
        let t = TokenTensor::normalized(4, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let store = TensorStore::from_tensors(4, &[t]).unwrap();
        let p = EmvbParams {
            n_subspaces: 3,
            ..EmvbParams::default()
        };
        assert!(EmvbIndex::build(&store, p, 0).is_err());
        let p = EmvbParams {
            n_centroids: Some(2),
            n_subspaces: 2,
            ..EmvbParams::default()
        };
        assert!(EmvbIndex::build(&store, p, 0).is_err());
    }
}
