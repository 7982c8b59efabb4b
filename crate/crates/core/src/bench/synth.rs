//! Deterministic synthetic collections with planted relevance.
//!
//! Every query owns a handful of topic terms. Each retrieval path plants those
//! terms into the query's relevant documents on its own, with its own random
//! stream, so the paths make independent mistakes. Background text is Zipf
//! distributed over a separate vocabulary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Zipf};
use serde::{Deserialize, Serialize};

use super::qrels::Qrels;
use super::runner::QuerySet;
use crate::dvs::DvsIndex;
use crate::engine::{EngineConfig, EngineHandle, QueryPayloads};
use crate::fts::{FtsIndex, Tokenizer};
use crate::svs::SvsIndex;
use crate::tens::{EmvbIndex, TensorStore};
use crate::error::{Error, Result};
use crate::model::{
    write_dense, write_sparse, write_tensors, CorpusManifest, CorpusRecord, DenseVector, PathTag, SparseVector,
    TokenTensor,
};

/// Probability that a topic term is planted into a relevant document, per path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantStrength {
    pub fts: f64,
    pub svs: f64,
    pub dvs: f64,
    pub tens: f64,
}

impl PlantStrength {
    pub fn uniform(p: f64) -> Self {
        Self {
            fts: p,
            svs: p,
            dvs: p,
            tens: p,
        }
    }

    fn get(&self, path: PathTag) -> f64 {
        match path {
            PathTag::Fts => self.fts,
            PathTag::Svs => self.svs,
            PathTag::Dvs => self.dvs,
            PathTag::Tens => self.tens,
            PathTag::Fused => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    pub doc_count: usize,
    pub vocab_size: usize,
    pub zipf_exponent: f64,
    /// Background words per document, inclusive range.
    pub doc_len: (usize, usize),
    pub dense_dim: usize,
    pub tensor_dim: usize,
    pub tokens_per_doc: (usize, usize),
    pub n_queries: usize,
    pub relevant_per_query: usize,
    pub topic_terms: usize,
    /// Background words added to each query.
    pub query_background_terms: usize,
    /// Non-relevant documents per query that receive stray topic terms.
    pub distractors_per_query: usize,
    /// Probability a distractor receives each topic term, per path.
    pub distractor_rate: f64,
    /// The corrupted path plants into random decoys instead of the relevant documents.
    pub noise_path: Option<PathTag>,
    pub strength: PlantStrength,
    /// Relative amplitude of each planted topic direction in dense vectors.
    pub dense_signal: f64,
    /// Token noise scale; grade-2 planted tokens use half of it.
    pub token_noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            doc_count: 1000,
            vocab_size: 5000,
            zipf_exponent: 1.1,
            doc_len: (20, 60),
            dense_dim: 64,
            tensor_dim: 64,
            tokens_per_doc: (16, 32),
            n_queries: 50,
            relevant_per_query: 6,
            topic_terms: 4,
            query_background_terms: 2,
            distractors_per_query: 12,
            distractor_rate: 0.3,
            noise_path: None,
            strength: PlantStrength::uniform(0.6),
            dense_signal: 0.5,
            token_noise: 0.6,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if self.doc_count == 0 || self.n_queries == 0 || self.vocab_size < 2 {
            return bad("doc_count, n_queries and vocab_size must be positive".into());
        }
        if self.relevant_per_query == 0 || self.relevant_per_query > self.doc_count {
            return bad(format!(
                "relevant_per_query {} must be in 1..={}",
                self.relevant_per_query, self.doc_count
            ));
        }
        if self.n_queries * self.relevant_per_query > self.doc_count {
            return bad(format!(
                "{} queries x {} relevant exceeds {} documents",
                self.n_queries, self.relevant_per_query, self.doc_count
            ));
        }
        if self.doc_len.0 == 0 || self.doc_len.0 > self.doc_len.1 {
            return bad(format!("bad doc_len range {:?}", self.doc_len));
        }
        if self.tokens_per_doc.0 == 0 || self.tokens_per_doc.0 > self.tokens_per_doc.1 {
            return bad(format!("bad tokens_per_doc range {:?}", self.tokens_per_doc));
        }
        if self.tokens_per_doc.0 < self.topic_terms {
            return bad("tokens_per_doc must leave room for every topic term".into());
        }
        if self.topic_terms == 0 || self.dense_dim == 0 || self.tensor_dim == 0 {
            return bad("topic_terms and dims must be positive".into());
        }
        if self.zipf_exponent.is_nan() || self.zipf_exponent <= 0.0 {
            return bad("zipf_exponent must be > 0".into());
        }
        if self.noise_path == Some(PathTag::Fused) {
            return bad("noise_path must be a scan path".into());
        }
        let s = self.strength;
        if [s.fts, s.svs, s.dvs, s.tens, self.distractor_rate]
            .iter()
            .any(|p| !(0.0..=1.0).contains(p))
        {
            return bad("probabilities must be in [0,1]".into());
        }
        Ok(())
    }
}

/// An in-memory generated collection.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    pub spec: SynthSpec,
    pub docs: Vec<CorpusRecord>,
    pub queries: Vec<CorpusRecord>,
    pub qrels: Qrels,
    pub doc_sparse: Vec<SparseVector>,
    pub doc_dense: Vec<DenseVector>,
    pub doc_tensors: Vec<TokenTensor>,
    pub query_sparse: Vec<SparseVector>,
    pub query_dense: Vec<DenseVector>,
    pub query_tensors: Vec<TokenTensor>,
}

/// Files written by [`SynthData::write`].
#[derive(Clone, Debug)]
pub struct SynthFiles {
    pub dir: PathBuf,
}

impl SynthFiles {
    pub fn corpus(&self) -> PathBuf {
        self.dir.join("corpus.jsonl")
    }
    pub fn queries(&self) -> PathBuf {
        self.dir.join("queries.jsonl")
    }
    pub fn qrels(&self) -> PathBuf {
        self.dir.join("qrels.txt")
    }
    pub fn svec(&self) -> PathBuf {
        self.dir.join("docs.svec")
    }
    pub fn dvec(&self) -> PathBuf {
        self.dir.join("docs.dvec")
    }
    pub fn tvec(&self) -> PathBuf {
        self.dir.join("docs.tvec")
    }
    pub fn query_svec(&self) -> PathBuf {
        self.dir.join("queries.svec")
    }
    pub fn query_dvec(&self) -> PathBuf {
        self.dir.join("queries.dvec")
    }
    pub fn query_tvec(&self) -> PathBuf {
        self.dir.join("queries.tvec")
    }
    pub fn config(&self) -> PathBuf {
        self.dir.join("config.json")
    }
    pub fn index_dir(&self) -> PathBuf {
        self.dir.join("index")
    }
}

// Independent random streams per component.
const STREAM_LAYOUT: u64 = 1;
const STREAM_TEXT: u64 = 2;
const STREAM_QUERY: u64 = 3;
const STREAM_EMBED: u64 = 4;
const STREAM_PLANT: u64 = 10;
const STREAM_REPR: u64 = 20;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn background_word(i: usize) -> String {
    format!("w{i}")
}

fn topic_word(j: usize) -> String {
    format!("t{j}")
}

fn gaussian_unit(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.iter_mut().for_each(|x| *x /= n);
    v.into_iter().map(|x| x as f32).collect()
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Which topic terms a path plants into which documents, with grade.
struct Planting {
    /// doc -> list of (topic term id, grade)
    per_doc: Vec<Vec<(usize, u32)>>,
}

struct Layout {
    /// Per query: (doc, grade) relevant documents
    relevant: Vec<Vec<(usize, u32)>>,
    distractors: Vec<Vec<usize>>,
}

fn layout(spec: &SynthSpec) -> Layout {
    let mut rng = stream(spec.seed, STREAM_LAYOUT);
    let mut order: Vec<usize> = (0..spec.doc_count).collect();
    order.shuffle(&mut rng);
    let r = spec.relevant_per_query;
    let grade2 = r.div_ceil(2);
    let relevant: Vec<Vec<(usize, u32)>> = (0..spec.n_queries)
        .map(|q| {
            order[q * r..(q + 1) * r]
                .iter()
                .enumerate()
                .map(|(i, &d)| (d, if i < grade2 { 2 } else { 1 }))
                .collect()
        })
        .collect();
    let mut is_rel = vec![false; spec.doc_count];
    relevant.iter().flatten().for_each(|&(d, _)| is_rel[d] = true);
    let pool: Vec<usize> = (0..spec.doc_count).filter(|&d| !is_rel[d]).collect();
    let distractors = (0..spec.n_queries)
        .map(|_| {
            pool.choose_multiple(&mut rng, spec.distractors_per_query.min(pool.len()))
                .copied()
                .collect()
        })
        .collect();
    Layout {
        relevant,
        distractors,
    }
}

fn plant(spec: &SynthSpec, lay: &Layout, path: PathTag, idx: u64) -> Planting {
    let mut rng = stream(spec.seed, STREAM_PLANT + idx);
    let p = spec.strength.get(path);
    let t = spec.topic_terms;
    let mut per_doc = vec![Vec::new(); spec.doc_count];
    for q in 0..spec.n_queries {
        let targets: Vec<(usize, u32)> = if spec.noise_path == Some(path) {
            lay.relevant[q]
                .iter()
                .map(|&(_, g)| (rng.random_range(0..spec.doc_count), g))
                .collect()
        } else {
            lay.relevant[q].clone()
        };
        for (d, g) in targets {
            for j in 0..t {
                if rng.random_bool(p) {
                    per_doc[d].push((q * t + j, g));
                }
            }
        }
        for &d in &lay.distractors[q] {
            for j in 0..t {
                if rng.random_bool(spec.distractor_rate) {
                    per_doc[d].push((q * t + j, 1));
                }
            }
        }
    }
    Planting { per_doc }
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let n = spec.doc_count;
    let t = spec.topic_terms;
    let n_topics = spec.n_queries * t;
    let lay = layout(spec);
    let plants: BTreeMap<PathTag, Planting> = PathTag::SCANS
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, plant(spec, &lay, p, i as u64)))
        .collect();

    // Background word ids per document.
    let zipf = Zipf::new(spec.vocab_size as f64, spec.zipf_exponent)
        .map_err(|e| Error::InvalidParam(e.to_string()))?;
    let mut rng = stream(spec.seed, STREAM_TEXT);
    let background: Vec<Vec<usize>> = (0..n)
        .map(|_| {
            let len = rng.random_range(spec.doc_len.0..=spec.doc_len.1);
            (0..len).map(|_| zipf.sample(&mut rng) as usize - 1).collect()
        })
        .collect();

    // Text: background words with FTS-planted topic terms inserted tf=grade times.
    let docs: Vec<CorpusRecord> = (0..n)
        .map(|d| {
            let mut words: Vec<String> = background[d].iter().map(|&w| background_word(w)).collect();
            for &(term, g) in &plants[&PathTag::Fts].per_doc[d] {
                for _ in 0..g {
                    let pos = rng.random_range(0..=words.len());
                    words.insert(pos, topic_word(term));
                }
            }
            CorpusRecord {
                id: format!("d{d}"),
                text: words.join(" "),
            }
        })
        .collect();

    // Queries: topic terms plus a few mid-frequency background words.
    let mut qrng = stream(spec.seed, STREAM_QUERY);
    let mid = (spec.vocab_size / 100).max(1)..(spec.vocab_size / 10).max(2);
    let query_bg: Vec<Vec<usize>> = (0..spec.n_queries)
        .map(|_| {
            (0..spec.query_background_terms)
                .map(|_| qrng.random_range(mid.clone()))
                .collect()
        })
        .collect();
    let queries: Vec<CorpusRecord> = (0..spec.n_queries)
        .map(|q| {
            let mut words: Vec<String> = (0..t).map(|j| topic_word(q * t + j)).collect();
            words.extend(query_bg[q].iter().map(|&w| background_word(w)));
            CorpusRecord {
                id: format!("q{q}"),
                text: words.join(" "),
            }
        })
        .collect();
    let mut qrels = Qrels::new();
    for (q, rel) in lay.relevant.iter().enumerate() {
        for &(d, g) in rel {
            qrels.insert(&format!("q{q}"), &format!("d{d}"), g);
        }
    }

    // Sparse: learned-style weights over background words plus planted topic ids.
    let topic_id = |term: usize| (spec.vocab_size + term) as u32;
    let mut srng = stream(spec.seed, STREAM_REPR);
    let doc_sparse = (0..n)
        .map(|d| {
            let mut pairs: Vec<(u32, f32)> = background[d]
                .iter()
                .map(|&w| (w as u32, srng.random_range(0.02..0.2)))
                .collect();
            for &(term, g) in &plants[&PathTag::Svs].per_doc[d] {
                pairs.push((topic_id(term), g as f32 * srng.random_range(0.5..1.5)));
            }
            SparseVector::from_pairs(pairs)
        })
        .collect::<Result<Vec<_>>>()?;
    let query_sparse = (0..spec.n_queries)
        .map(|q| {
            let mut pairs: Vec<(u32, f32)> = (0..t).map(|j| (topic_id(q * t + j), 1.0)).collect();
            pairs.extend(query_bg[q].iter().map(|&w| (w as u32, 0.3)));
            SparseVector::from_pairs(pairs)
        })
        .collect::<Result<Vec<_>>>()?;

    // Dense: background noise plus grade-scaled planted topic directions.
    let mut erng = stream(spec.seed, STREAM_EMBED);
    let topic_dense: Vec<Vec<f32>> = (0..n_topics).map(|_| gaussian_unit(spec.dense_dim, &mut erng)).collect();
    let mut drng = stream(spec.seed, STREAM_REPR + 1);
    let doc_dense = (0..n)
        .map(|d| {
            let mut v: Vec<f64> = (0..spec.dense_dim)
                .map(|_| StandardNormal.sample(&mut drng))
                .map(|x: f64| x / (spec.dense_dim as f64).sqrt())
                .collect();
            for &(term, g) in &plants[&PathTag::Dvs].per_doc[d] {
                let a = spec.dense_signal * g as f64;
                for (x, y) in v.iter_mut().zip(&topic_dense[term]) {
                    *x += a * *y as f64;
                }
            }
            normalize(&mut v);
            DenseVector::new(v.into_iter().map(|x| x as f32).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let query_dense = (0..spec.n_queries)
        .map(|q| {
            let mut v: Vec<f64> = (0..spec.dense_dim)
                .map(|_| StandardNormal.sample(&mut drng))
                .map(|x: f64| 0.2 * x / (spec.dense_dim as f64).sqrt())
                .collect();
            for j in 0..t {
                for (x, y) in v.iter_mut().zip(&topic_dense[q * t + j]) {
                    *x += *y as f64;
                }
            }
            normalize(&mut v);
            DenseVector::new(v.into_iter().map(|x| x as f32).collect())
        })
        .collect::<Result<Vec<_>>>()?;

    // Tensors: one noisy copy of a per-word embedding per token.
    let bg_embed: Vec<Vec<f32>> = (0..spec.vocab_size)
        .map(|_| gaussian_unit(spec.tensor_dim, &mut erng))
        .collect();
    let topic_embed: Vec<Vec<f32>> = (0..n_topics).map(|_| gaussian_unit(spec.tensor_dim, &mut erng)).collect();
    let mut trng = stream(spec.seed, STREAM_REPR + 2);
    let dim = spec.tensor_dim;
    let noisy = |base: &[f32], sigma: f64, rng: &mut ChaCha8Rng| -> Vec<f32> {
        let mut v: Vec<f64> = base
            .iter()
            .map(|&b| b as f64 + sigma * Distribution::<f64>::sample(&StandardNormal, &mut *rng) / (dim as f64).sqrt())
            .collect();
        normalize(&mut v);
        v.into_iter().map(|x| x as f32).collect()
    };
    let mut doc_tensors = Vec::with_capacity(n);
    for d in 0..n {
        let n_tok = trng.random_range(spec.tokens_per_doc.0..=spec.tokens_per_doc.1);
        let mut rows = Vec::with_capacity(n_tok * dim);
        let planted = &plants[&PathTag::Tens].per_doc[d];
        for &(term, g) in planted.iter().take(n_tok) {
            let sigma = spec.token_noise / g as f64;
            rows.extend(noisy(&topic_embed[term], sigma, &mut trng));
        }
        for _ in planted.len().min(n_tok)..n_tok {
            let w = background[d][trng.random_range(0..background[d].len())];
            rows.extend(noisy(&bg_embed[w], spec.token_noise, &mut trng));
        }
        doc_tensors.push(TokenTensor::normalized(dim, rows)?);
    }
    let query_tensors = (0..spec.n_queries)
        .map(|q| {
            let mut rows = Vec::new();
            for j in 0..t {
                rows.extend(noisy(&topic_embed[q * t + j], spec.token_noise / 2.0, &mut trng));
            }
            for &w in &query_bg[q] {
                rows.extend(noisy(&bg_embed[w], spec.token_noise / 2.0, &mut trng));
            }
            TokenTensor::normalized(dim, rows)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SynthData {
        spec: spec.clone(),
        docs,
        queries,
        qrels,
        doc_sparse,
        doc_dense,
        doc_tensors,
        query_sparse,
        query_dense,
        query_tensors,
    })
}

fn write_jsonl(path: &Path, records: &[CorpusRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

impl SynthData {
    pub fn manifest(&self, tokenizer: &Tokenizer) -> Result<CorpusManifest> {
        CorpusManifest::from_records(&self.docs, tokenizer)
    }

    /// Every query with all four payloads.
    pub fn query_set(&self) -> QuerySet {
        QuerySet {
            ids: self.queries.iter().map(|q| q.id.clone()).collect(),
            payloads: (0..self.queries.len())
                .map(|i| QueryPayloads {
                    text: Some(self.queries[i].text.clone()),
                    sparse: Some(self.query_sparse[i].clone()),
                    dense: Some(self.query_dense[i].clone()),
                    tensor: Some(self.query_tensors[i].clone()),
                })
                .collect(),
        }
    }

    /// Builds in-memory indexes for `cfg.paradigms` without touching disk.
    pub fn build_handle(&self, cfg: &EngineConfig) -> Result<EngineHandle> {
        let tokenizer = cfg.fts.tokenizer();
        let manifest = self.manifest(&tokenizer)?;
        let mut h = EngineHandle::new(manifest);
        h.params = cfg.search_params();
        let want = |p| cfg.paradigms.contains(&p);
        if want(PathTag::Fts) {
            h.fts = Some(FtsIndex::build(
                &h.manifest,
                self.docs.iter().map(|d| d.text.as_str()),
                &tokenizer,
                cfg.fts.bm25(),
                cfg.fts.block_size,
            )?);
        }
        if want(PathTag::Svs) {
            h.svs = Some(SvsIndex::build(self.doc_sparse.clone(), cfg.svs.block_size)?);
        }
        if want(PathTag::Dvs) {
            h.dvs = Some(DvsIndex::build(&self.doc_dense, cfg.dvs, cfg.bench.seed)?);
        }
        let store = TensorStore::from_tensors(self.spec.tensor_dim, &self.doc_tensors)?;
        if want(PathTag::Tens) && cfg.tens.emvb {
            h.emvb = Some(EmvbIndex::build(&store, cfg.tens.build_params(), cfg.bench.seed)?);
        }
        h.tensors = Some(store);
        Ok(h)
    }

    /// Writes every input file plus a `config.json` pointing at them.
    pub fn write(&self, dir: &Path) -> Result<SynthFiles> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let f = SynthFiles {
            dir: dir.to_path_buf(),
        };
        write_jsonl(&f.corpus(), &self.docs)?;
        write_jsonl(&f.queries(), &self.queries)?;
        self.qrels.write(&f.qrels())?;
        write_sparse(&f.svec(), &self.doc_sparse)?;
        write_dense(&f.dvec(), self.spec.dense_dim, &self.doc_dense)?;
        write_tensors(&f.tvec(), self.spec.tensor_dim, &self.doc_tensors)?;
        write_sparse(&f.query_svec(), &self.query_sparse)?;
        write_dense(&f.query_dvec(), self.spec.dense_dim, &self.query_dense)?;
        write_tensors(&f.query_tvec(), self.spec.tensor_dim, &self.query_tensors)?;
        let mut cfg = EngineConfig::default();
        cfg.bench.seed = self.spec.seed;
        let p = &mut cfg.paths;
        p.corpus = Some("corpus.jsonl".into());
        p.queries = Some("queries.jsonl".into());
        p.qrels = Some("qrels.txt".into());
        p.svec = Some("docs.svec".into());
        p.dvec = Some("docs.dvec".into());
        p.tvec = Some("docs.tvec".into());
        p.query_svec = Some("queries.svec".into());
        p.query_dvec = Some("queries.dvec".into());
        p.query_tvec = Some("queries.tvec".into());
        p.index_dir = Some("index".into());
        std::fs::write(f.config(), cfg.to_json()).map_err(|e| Error::io(f.config(), e))?;
        Ok(f)
    }
}
