//! Dense path: HNSW graph over inner-product similarity with optional
//! 8-bit per-vector quantization for traversal and exact final re-scoring.

mod quant;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{read_file, write_file, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::fts::check_fingerprint;
use crate::model::{
    dot_f32, dot_f64, CorpusManifest, DenseVector, DocOrdinal, PathTag, RankedList, TopK,
};

pub use quant::{dequantize_codes, quantize_vector, QuantizedVector};

pub const DVS_MAGIC: &[u8; 4] = b"HSDG";
const DVS_VERSION: u32 = 1;
const MAX_LEVEL: usize = 16;
const QUANT_BITS: u8 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HnswParams {
    #[serde(rename = "M")]
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub quantize: bool,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self {
            m: 16,
            ef_construction: 200,
            ef_search: 100,
            quantize: false,
        }
    }
}

impl HnswParams {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidParam(format!("M must be >= 2, got {}", self.m)));
        }
        if self.ef_construction < self.m {
            return Err(Error::InvalidParam(format!(
                "ef_construction ({}) must be >= M ({})",
                self.ef_construction, self.m
            )));
        }
        Ok(())
    }

    fn cap(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.m
        } else {
            self.m
        }
    }
}

/// Similarity/id pair ordered by similarity, ties to the lower id.
#[derive(Clone, Copy, Debug)]
struct Near {
    sim: f32,
    id: u32,
}

impl PartialEq for Near {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Near {}
impl PartialOrd for Near {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Near {
    fn cmp(&self, o: &Self) -> Ordering {
        self.sim.total_cmp(&o.sim).then(o.id.cmp(&self.id))
    }
}

/// Quantized copy of every vector, used only during graph traversal.
#[derive(Clone, Debug, PartialEq)]
struct QuantStore {
    codes: Vec<u8>,
    mins: Vec<f32>,
    scales: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DvsIndex {
    dim: usize,
    params: HnswParams,
    vectors: Vec<f32>,
    /// node -> layer -> neighbors
    links: Vec<Vec<Vec<u32>>>,
    entry: u32,
    max_level: usize,
    quant: Option<QuantStore>,
}

/// Query-side view that scores nodes either exactly or via codes.
struct Scorer<'a> {
    index: &'a DvsIndex,
    q: &'a [f32],
    q_sum: f32,
}

impl Scorer<'_> {
    #[inline]
    fn sim(&self, id: u32) -> f32 {
        let i = id as usize;
        match &self.index.quant {
            Some(qs) => {
                let codes = &qs.codes[i * self.index.dim..(i + 1) * self.index.dim];
                let mut acc = 0f32;
                for (c, x) in codes.iter().zip(self.q) {
                    acc += *c as f32 * x;
                }
                qs.mins[i] * self.q_sum + qs.scales[i] * acc
            }
            None => dot_f32(self.q, self.index.vector(i)),
        }
    }
}

impl DvsIndex {
    /// Inserts vectors in ordinal order; level draws come from `seed`.
    pub fn build(vectors: &[DenseVector], params: HnswParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let first = vectors
            .first()
            .ok_or_else(|| Error::InvalidParam("HNSW needs at least one vector".into()))?;
        let dim = first.dim();
        let mut flat = Vec::with_capacity(vectors.len() * dim);
        for v in vectors {
            if v.dim() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: v.dim(),
                });
            }
            flat.extend_from_slice(v.values());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ml = 1.0 / (params.m as f64).ln();
        let mut index = DvsIndex {
            dim,
            params,
            vectors: flat,
            links: Vec::with_capacity(vectors.len()),
            entry: 0,
            max_level: 0,
            quant: None,
        };
        for node in 0..vectors.len() {
            let u: f64 = rng.random::<f64>();
            let level = ((-(1.0 - u).ln()) * ml).floor() as usize;
            index.insert(node as u32, level.min(MAX_LEVEL));
        }
        if params.quantize {
            index.quant = Some(index.quantize_all());
        }
        Ok(index)
    }

    fn quantize_all(&self) -> QuantStore {
        let n = self.len();
        let mut codes = Vec::with_capacity(n * self.dim);
        let mut mins = Vec::with_capacity(n);
        let mut scales = Vec::with_capacity(n);
        for i in 0..n {
            let q = quantize_vector(self.vector(i), QUANT_BITS);
            mins.push(q.min);
            scales.push(q.scale() as f32);
            codes.extend_from_slice(&q.codes);
        }
        QuantStore {
            codes,
            mins,
            scales,
        }
    }

    fn insert(&mut self, node: u32, level: usize) {
        self.links.push(vec![Vec::new(); level + 1]);
        if node == 0 {
            self.entry = 0;
            self.max_level = level;
            return;
        }
        let q = self.vector(node as usize).to_vec();
        let mut ep = Near {
            sim: dot_f32(&q, self.vector(self.entry as usize)),
            id: self.entry,
        };
        for layer in (level + 1..=self.max_level).rev() {
            ep = self.greedy_exact(&q, ep, layer);
        }
        let mut entry_points = vec![ep];
        for layer in (0..=level.min(self.max_level)).rev() {
            let found =
                self.search_layer_exact(&q, &entry_points, self.params.ef_construction, layer);
            let chosen = self.select_neighbors(&found, self.params.m);
            self.links[node as usize][layer] = chosen.iter().map(|n| n.id).collect();
            for nb in &chosen {
                self.link_back(nb.id, node, nb.sim, layer);
            }
            entry_points = found;
        }
        if level > self.max_level {
            self.max_level = level;
            self.entry = node;
        }
    }

    fn link_back(&mut self, from: u32, to: u32, sim: f32, layer: usize) {
        let cap = self.params.cap(layer);
        let list = &mut self.links[from as usize][layer];
        if list.len() < cap {
            list.push(to);
            return;
        }
        let base = self.vector(from as usize);
        let mut cands: Vec<Near> = self.links[from as usize][layer]
            .iter()
            .map(|&id| Near {
                sim: dot_f32(base, self.vector(id as usize)),
                id,
            })
            .collect();
        cands.push(Near { sim, id: to });
        cands.sort_by(|a, b| b.cmp(a));
        let kept = self.select_neighbors(&cands, cap);
        self.links[from as usize][layer] = kept.into_iter().map(|n| n.id).collect();
    }

    /// Diversity heuristic: keep a candidate only if it is more similar to
    /// the base than to every neighbor already kept. `cands` must be sorted
    /// best first.
    fn select_neighbors(&self, cands: &[Near], m: usize) -> Vec<Near> {
        let mut kept: Vec<Near> = Vec::with_capacity(m);
        for c in cands {
            if kept.len() >= m {
                break;
            }
            let cv = self.vector(c.id as usize);
            let diverse = kept
                .iter()
                .all(|k| dot_f32(cv, self.vector(k.id as usize)) < c.sim);
            if diverse {
                kept.push(*c);
            }
        }
        kept
    }

    fn greedy_exact(&self, q: &[f32], mut ep: Near, layer: usize) -> Near {
        loop {
            let mut improved = false;
            for &nb in &self.links[ep.id as usize][layer] {
                let cand = Near {
                    sim: dot_f32(q, self.vector(nb as usize)),
                    id: nb,
                };
                if cand > ep {
                    ep = cand;
                    improved = true;
                }
            }
            if !improved {
                return ep;
            }
        }
    }

    fn search_layer_exact(&self, q: &[f32], eps: &[Near], ef: usize, layer: usize) -> Vec<Near> {
        self.search_layer(eps, ef, layer, |id| dot_f32(q, self.vector(id as usize)))
    }

    /// Beam search on one layer; returns up to `ef` nodes, best first.
    fn search_layer(
        &self,
        eps: &[Near],
        ef: usize,
        layer: usize,
        sim: impl Fn(u32) -> f32,
    ) -> Vec<Near> {
        let mut visited = vec![false; self.len()];
        let mut candidates: BinaryHeap<Near> = BinaryHeap::new();
        let mut results: BinaryHeap<std::cmp::Reverse<Near>> = BinaryHeap::new();
        for &ep in eps {
            if !visited[ep.id as usize] {
                visited[ep.id as usize] = true;
                candidates.push(ep);
                results.push(std::cmp::Reverse(ep));
            }
        }
        while results.len() > ef {
            results.pop();
        }
        while let Some(c) = candidates.pop() {
            if results.len() >= ef {
                if let Some(worst) = results.peek() {
                    if c < worst.0 {
                        break;
                    }
                }
            }
            for &nb in &self.links[c.id as usize][layer] {
                if visited[nb as usize] {
                    continue;
                }
                visited[nb as usize] = true;
                let cand = Near { sim: sim(nb), id: nb };
                if results.len() < ef || results.peek().is_some_and(|w| cand > w.0) {
                    candidates.push(cand);
                    results.push(std::cmp::Reverse(cand));
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        let mut out: Vec<Near> = results.into_iter().map(|r| r.0).collect();
        out.sort_by(|a, b| b.cmp(a));
        out
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> HnswParams {
        self.params
    }

    pub fn is_quantized(&self) -> bool {
        self.quant.is_some()
    }

    pub fn entry_point(&self) -> DocOrdinal {
        DocOrdinal(self.entry)
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Neighbor list of `node` on `layer`, if the node exists there.
    pub fn neighbors(&self, node: DocOrdinal, layer: usize) -> Option<&[u32]> {
        self.links
            .get(node.index())
            .and_then(|ls| ls.get(layer))
            .map(Vec::as_slice)
    }

    pub fn node_level(&self, node: DocOrdinal) -> usize {
        self.links[node.index()].len() - 1
    }

    /// Neighbor cap on `layer` (2M at layer 0, M above).
    pub fn layer_cap(&self, layer: usize) -> usize {
        self.params.cap(layer)
    }

    /// Number of layer-0 nodes reachable from the entry point.
    pub fn reachable_from_entry(&self) -> usize {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![self.entry];
        seen[self.entry as usize] = true;
        let mut count = 0;
        while let Some(n) = stack.pop() {
            count += 1;
            for &nb in &self.links[n as usize][0] {
                if !seen[nb as usize] {
                    seen[nb as usize] = true;
                    stack.push(nb);
                }
            }
        }
        count
    }

    /// Approximate top-k by inner product. The final `ef` candidates are
    /// always re-scored exactly.
    pub fn topk(&self, q: &DenseVector, k: usize, ef_search: usize) -> Result<RankedList> {
        if q.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: q.dim(),
            });
        }
        if k == 0 || self.is_empty() {
            return Ok(RankedList::empty(PathTag::Dvs));
        }
        let ef = ef_search.max(k);
        let qv = q.values();
        let scorer = Scorer {
            index: self,
            q: qv,
            q_sum: qv.iter().sum(),
        };
        let mut ep = Near {
            sim: scorer.sim(self.entry),
            id: self.entry,
        };
        for layer in (1..=self.max_level).rev() {
            loop {
                let mut improved = false;
                for &nb in &self.links[ep.id as usize][layer] {
                    let cand = Near {
                        sim: scorer.sim(nb),
                        id: nb,
                    };
                    if cand > ep {
                        ep = cand;
                        improved = true;
                    }
                }
                if !improved {
                    break;
                }
            }
        }
        let found = self.search_layer(&[ep], ef, 0, |id| scorer.sim(id));
        let mut top = TopK::new(k);
        for n in found {
            top.push(DocOrdinal(n.id), dot_f64(qv, self.vector(n.id as usize)));
        }
        Ok(top.into_ranked(PathTag::Dvs))
    }

    pub fn to_bytes(&self, manifest: &CorpusManifest) -> Vec<u8> {
        let mut w = ByteWriter::header(DVS_MAGIC, DVS_VERSION);
        w.u64(manifest.fingerprint());
        w.u32(self.dim as u32);
        w.u64(self.len() as u64);
        w.u32(self.params.m as u32);
        w.u32(self.params.ef_construction as u32);
        w.u32(self.params.ef_search as u32);
        w.u8(self.quant.is_some() as u8);
        w.u32(self.entry);
        w.u32(self.max_level as u32);
        for node in &self.links {
            w.u8((node.len() - 1) as u8);
            for layer in node {
                w.u32(layer.len() as u32);
                w.u32s(layer);
            }
        }
        w.f32s(&self.vectors);
        if let Some(q) = &self.quant {
            w.f32s(&q.mins);
            w.f32s(&q.scales);
            w.bytes(&q.codes);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8], manifest: &CorpusManifest) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.header(DVS_MAGIC, DVS_VERSION)?;
        check_fingerprint(r.u64()?, manifest)?;
        let dim = r.u32()? as usize;
        let n = r.len_prefix()?;
        if n != manifest.doc_count() {
            return Err(Error::DimMismatch {
                expected: manifest.doc_count(),
                found: n,
            });
        }
        let params = HnswParams {
            m: r.u32()? as usize,
            ef_construction: r.u32()? as usize,
            ef_search: r.u32()? as usize,
            quantize: r.u8()? != 0,
        };
        params.validate()?;
        let entry = r.u32()?;
        let max_level = r.u32()? as usize;
        let mut links = Vec::with_capacity(n);
        for _ in 0..n {
            let level = r.u8()? as usize;
            let mut layers = Vec::with_capacity(level + 1);
            for _ in 0..=level {
                let len = r.u32()? as usize;
                let nbs = r.u32s(len)?;
                if nbs.iter().any(|&x| x as usize >= n) {
                    return Err(Error::Truncated("neighbor id out of range".into()));
                }
                layers.push(nbs);
            }
            links.push(layers);
        }
        if entry as usize >= n.max(1) {
            return Err(Error::Truncated("entry point out of range".into()));
        }
        let vectors = r.f32s(n * dim)?;
        let quant = if params.quantize {
            Some(QuantStore {
                mins: r.f32s(n)?,
                scales: r.f32s(n)?,
                codes: r.take(n * dim, "codes")?.to_vec(),
            })
        } else {
            None
        };
        Ok(Self {
            dim,
            params,
            vectors,
            links,
            entry,
            max_level,
            quant,
        })
    }

    pub fn save(&self, path: &Path, manifest: &CorpusManifest) -> Result<()> {
        write_file(path, &self.to_bytes(manifest))
    }

    pub fn load(path: &Path, manifest: &CorpusManifest) -> Result<Self> {
        Self::from_bytes(&read_file(path)?, manifest)
    }
}

/// Exact inner-product top-k over `vectors`.
pub fn dvs_bruteforce(vectors: &[DenseVector], q: &DenseVector, k: usize) -> RankedList {
    let mut top = TopK::new(k);
    for (i, v) in vectors.iter().enumerate() {
        top.push(DocOrdinal(i as u32), dot_f64(q.values(), v.values()));
    }
    top.into_ranked(PathTag::Dvs)
}
