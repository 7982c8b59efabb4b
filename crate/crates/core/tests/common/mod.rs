//! Straightforward reference implementations used to check the indexes.
#![allow(dead_code)]

use std::collections::HashMap;

use hsearch::bench::{generate_synthetic, SynthData, SynthSpec};
use hsearch::{DenseVector, DocOrdinal, SparseVector, TokenTensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sorts by score descending, then ordinal ascending, and keeps `k`.
pub fn rank(mut scored: Vec<(u32, f64)>, k: usize) -> Vec<(u32, f64)> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

pub fn split_words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

/// Exhaustive BM25 over raw texts. Repeated query terms count once per
/// occurrence; contributions are added in first-occurrence order.
pub fn bm25_oracle(texts: &[String], query: &[String], k1: f64, b: f64, k: usize) -> Vec<(u32, f64)> {
    let docs: Vec<Vec<String>> = texts.iter().map(|t| split_words(t)).collect();
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.len() as u64).sum::<u64>() as f64 / n;
    let mut uniq: Vec<(String, f64)> = Vec::new();
    for t in query {
        match uniq.iter_mut().find(|(u, _)| u == t) {
            Some(e) => e.1 += 1.0,
            None => uniq.push((t.clone(), 1.0)),
        }
    }
    let df: Vec<usize> = uniq
        .iter()
        .map(|(t, _)| docs.iter().filter(|d| d.contains(t)).count())
        .collect();
    let mut scored = Vec::new();
    for (i, d) in docs.iter().enumerate() {
        let len = d.len() as f64;
        let norm = k1 * (1.0 - b + b * (len / avgdl));
        let mut s = 0.0;
        let mut matched = false;
        for ((t, mult), &df) in uniq.iter().zip(&df) {
            let tf = d.iter().filter(|w| *w == t).count();
            if tf == 0 || df == 0 {
                continue;
            }
            matched = true;
            let idf = (1.0 + (n - df as f64 + 0.5) / (df as f64 + 0.5)).ln();
            let tf = tf as f64;
            s += mult * (idf * (tf * (k1 + 1.0)) / (tf + norm));
        }
        if matched {
            scored.push((i as u32, s));
        }
    }
    rank(scored, k)
}

pub fn sparse_dot_oracle(q: &SparseVector, d: &SparseVector) -> f64 {
    let dm: HashMap<u32, f32> = d.entries().iter().copied().collect();
    // ascending term order, as both vectors are sorted
    q.entries()
        .iter()
        .filter_map(|(t, w)| dm.get(t).map(|x| *w as f64 * *x as f64))
        .sum()
}

pub fn sparse_oracle(docs: &[SparseVector], q: &SparseVector, k: usize) -> Vec<(u32, f64)> {
    let scored = docs
        .iter()
        .enumerate()
        .map(|(i, d)| (i as u32, sparse_dot_oracle(q, d)))
        .filter(|s| s.1 > 0.0)
        .collect();
    rank(scored, k)
}

pub fn dense_oracle(docs: &[DenseVector], q: &DenseVector, k: usize) -> Vec<u32> {
    let scored = docs
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let s: f64 = d.values().iter().zip(q.values()).map(|(a, b)| *a as f64 * *b as f64).sum();
            (i as u32, s)
        })
        .collect();
    rank(scored, k).into_iter().map(|s| s.0).collect()
}

pub fn maxsim_oracle(q: &TokenTensor, d: &TokenTensor) -> f64 {
    let mut total = 0.0;
    for i in 0..q.n_tokens() {
        let mut best = f64::NEG_INFINITY;
        for j in 0..d.n_tokens() {
            let mut s = 0.0;
            for (a, b) in q.row(i).iter().zip(d.row(j)) {
                s += *a as f64 * *b as f64;
            }
            best = best.max(s);
        }
        total += best;
    }
    total
}

/// Independent nDCG@k: gain 2^rel - 1, log2(rank + 1) discount.
pub fn ndcg_oracle(ranking: &[String], rels: &HashMap<String, u32>, k: usize) -> Option<f64> {
    let mut dcg = 0.0;
    for (pos, id) in ranking.iter().take(k).enumerate() {
        let rel = *rels.get(id).unwrap_or(&0);
        dcg += (2f64.powf(rel as f64) - 1.0) / (pos as f64 + 2.0).log2();
    }
    let mut grades: Vec<u32> = rels.values().copied().filter(|r| *r > 0).collect();
    if grades.is_empty() {
        return None;
    }
    grades.sort();
    grades.reverse();
    let mut idcg = 0.0;
    for (pos, rel) in grades.iter().take(k).enumerate() {
        idcg += (2f64.powf(*rel as f64) - 1.0) / (pos as f64 + 2.0).log2();
    }
    Some(dcg / idcg)
}

pub fn unit_gaussian(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let v: Vec<f64> = (0..dim)
        .map(|_| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, rng))
        .collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| (x / n) as f32).collect()
}

/// Normalized Gaussian vectors.
pub fn gaussian_vectors(n: usize, dim: usize, seed: u64) -> Vec<DenseVector> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| DenseVector::new(unit_gaussian(dim, &mut r)).unwrap())
        .collect()
}

pub fn random_tensors(n: usize, dim: usize, tokens: (usize, usize), seed: u64) -> Vec<TokenTensor> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let t = r.random_range(tokens.0..=tokens.1);
            let rows: Vec<f32> = (0..t).flat_map(|_| unit_gaussian(dim, &mut r)).collect();
            TokenTensor::new(dim, rows).unwrap()
        })
        .collect()
}

pub fn synth(doc_count: usize, seed: u64) -> SynthData {
    generate_synthetic(&SynthSpec {
        seed,
        doc_count,
        n_queries: (doc_count / 20).clamp(5, 50),
        ..SynthSpec::default()
    })
    .unwrap()
}

pub fn ordinals(v: &[(u32, f64)]) -> Vec<DocOrdinal> {
    v.iter().map(|s| DocOrdinal(s.0)).collect()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

/// Random texts over `w0..w{vocab}` with Zipf-distributed word frequencies.
pub fn zipf_texts(n: usize, vocab: usize, len: (usize, usize), s: f64, seed: u64) -> Vec<String> {
    let mut r = rng(seed);
    let zipf = rand_distr::Zipf::new(vocab as f64, s).unwrap();
    (0..n)
        .map(|_| {
            let l = r.random_range(len.0..=len.1);
            (0..l)
                .map(|_| {
                    let w = rand_distr::Distribution::<f64>::sample(&zipf, &mut r) as usize - 1;
                    format!("w{w}")
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

pub fn zipf_query(vocab: usize, terms: usize, s: f64, r: &mut ChaCha8Rng) -> Vec<String> {
    let zipf = rand_distr::Zipf::new(vocab as f64, s).unwrap();
    (0..terms)
        .map(|_| format!("w{}", rand_distr::Distribution::<f64>::sample(&zipf, r) as usize - 1))
        .collect()
}

pub fn fts_index(texts: &[String], block_size: usize) -> hsearch::fts::FtsIndex {
    let tok = hsearch::fts::Tokenizer::default();
    let ids = (0..texts.len()).map(|i| format!("d{i}")).collect();
    let lens = texts.iter().map(|t| tok.tokenize(t).len() as u32).collect();
    let manifest = hsearch::CorpusManifest::new(ids, lens).unwrap();
    hsearch::fts::FtsIndex::build(
        &manifest,
        texts.iter().map(|t| t.as_str()),
        &tok,
        hsearch::fts::Bm25Params::default(),
        block_size,
    )
    .unwrap()
}

pub fn hits(list: &hsearch::RankedList) -> Vec<(u32, f64)> {
    list.hits.iter().map(|h| (h.doc.0, h.score)).collect()
}

/// Sparse vectors with Zipf term ids and uniform weights in (0, 1].
pub fn zipf_sparse(n: usize, vocab: usize, nnz: (usize, usize), seed: u64) -> Vec<SparseVector> {
    let mut r = rng(seed);
    (0..n).map(|_| zipf_sparse_one(vocab, nnz, &mut r)).collect()
}

pub fn zipf_sparse_one(vocab: usize, nnz: (usize, usize), r: &mut ChaCha8Rng) -> SparseVector {
    let zipf = rand_distr::Zipf::new(vocab as f64, 1.0).unwrap();
    let m = r.random_range(nnz.0..=nnz.1);
    let pairs = (0..m)
        .map(|_| {
            let t = rand_distr::Distribution::<f64>::sample(&zipf, r) as u32 - 1;
            (t, r.random_range(0.01f32..1.0))
        })
        .collect();
    SparseVector::from_pairs(pairs).unwrap()
}
