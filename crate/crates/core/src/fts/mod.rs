//! Full-text path: inverted index with per-block BM25 maxima and a
//! Block-Max WAND top-k that is exact with respect to exhaustive scoring.

mod bmw;
mod tokenizer;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{read_file, write_file, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::model::{read_records, CorpusManifest, DocOrdinal, RankedList};

pub use bmw::FtsStats;
pub use tokenizer::Tokenizer;

pub const FTS_MAGIC: &[u8; 4] = b"HSFT";
const FTS_VERSION: u32 = 1;
pub const DEFAULT_BLOCK_SIZE: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 >= 0.0 && self.k1.is_finite()) {
            return Err(Error::InvalidParam(format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidParam(format!("b must be in [0,1], got {}", self.b)));
        }
        Ok(())
    }
}

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`, never negative.
#[inline]
pub fn idf(doc_count: usize, df: usize) -> f64 {
    let n = doc_count as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// One term's share of the BM25 sum. `length_norm` is
/// `k1 * (1 - b + b * len / avgdl)` for the document.
#[inline]
pub(crate) fn term_score(idf: f64, tf: u32, length_norm: f64, k1: f64) -> f64 {
    let tf = tf as f64;
    idf * (tf * (k1 + 1.0)) / (tf + length_norm)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct BlockMax {
    pub last_doc: u32,
    pub max_score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PostingList {
    term: String,
    docs: Vec<u32>,
    tfs: Vec<u32>,
    idf: f64,
    blocks: Vec<BlockMax>,
}

impl PostingList {
    pub fn term(&self) -> &str {
        &self.term
    }

    pub fn doc_freq(&self) -> usize {
        self.docs.len()
    }

    pub fn postings(&self) -> impl Iterator<Item = (DocOrdinal, u32)> + '_ {
        self.docs
            .iter()
            .zip(&self.tfs)
            .map(|(&d, &tf)| (DocOrdinal(d), tf))
    }

    pub fn idf(&self) -> f64 {
        self.idf
    }

    /// `(first posting index, max_block_score)` for each block.
    pub fn blocks(&self, block_size: usize) -> Vec<(usize, f64)> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (i * block_size, b.max_score))
            .collect()
    }

    pub fn tf(&self, doc: DocOrdinal) -> u32 {
        match self.docs.binary_search(&doc.0) {
            Ok(i) => self.tfs[i],
            Err(_) => 0,
        }
    }

    fn max_score(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_score).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct FtsIndex {
    dictionary: HashMap<String, PostingList>,
    manifest: CorpusManifest,
    params: Bm25Params,
    block_size: usize,
    tokenizer: Tokenizer,
    length_norm: Vec<f64>,
}

impl FtsIndex {
    /// Builds from document texts given in ordinal order.
    pub fn build<'a>(
        manifest: &CorpusManifest,
        texts: impl IntoIterator<Item = &'a str>,
        tokenizer: &Tokenizer,
        params: Bm25Params,
        block_size: usize,
    ) -> Result<Self> {
        params.validate()?;
        if block_size == 0 {
            return Err(Error::InvalidParam("block_size must be positive".into()));
        }
        let mut raw: HashMap<String, (Vec<u32>, Vec<u32>)> = HashMap::new();
        let mut n = 0usize;
        for (ord, text) in texts.into_iter().enumerate() {
            if ord >= manifest.doc_count() {
                return Err(Error::IndexCorpusMismatch {
                    index: 0,
                    manifest: manifest.fingerprint(),
                });
            }
            let mut counts: HashMap<String, u32> = HashMap::new();
            for tok in tokenizer.tokenize(text) {
                *counts.entry(tok).or_default() += 1;
            }
            for (term, tf) in counts {
                let e = raw.entry(term).or_default();
                e.0.push(ord as u32);
                e.1.push(tf);
            }
            n += 1;
        }
        if n != manifest.doc_count() {
            return Err(Error::IndexCorpusMismatch {
                index: 0,
                manifest: manifest.fingerprint(),
            });
        }
        let postings = raw.into_iter().map(|(t, (d, f))| (t, d, f)).collect();
        Ok(Self::assemble(manifest.clone(), params, block_size, tokenizer.clone(), postings))
    }

    fn assemble(
        manifest: CorpusManifest,
        params: Bm25Params,
        block_size: usize,
        tokenizer: Tokenizer,
        postings: Vec<(String, Vec<u32>, Vec<u32>)>,
    ) -> Self {
        let avgdl = manifest.avg_doc_len();
        let length_norm: Vec<f64> = manifest
            .doc_lens()
            .iter()
            .map(|&len| {
                let ratio = if avgdl > 0.0 { len as f64 / avgdl } else { 1.0 };
                params.k1 * (1.0 - params.b + params.b * ratio)
            })
            .collect();
        let n_docs = manifest.doc_count();
        let dictionary = postings
            .into_iter()
            .map(|(term, docs, tfs)| {
                let idf = idf(n_docs, docs.len());
                let blocks = docs
                    .chunks(block_size)
                    .zip(tfs.chunks(block_size))
                    .map(|(ds, fs)| BlockMax {
                        last_doc: *ds.last().unwrap(),
                        max_score: ds
                            .iter()
                            .zip(fs)
                            .map(|(&d, &f)| term_score(idf, f, length_norm[d as usize], params.k1))
                            .fold(0.0, f64::max),
                    })
                    .collect();
                let list = PostingList {
                    term: term.clone(),
                    docs,
                    tfs,
                    idf,
                    blocks,
                };
                (term, list)
            })
            .collect();
        Self {
            dictionary,
            manifest,
            params,
            block_size,
            tokenizer,
            length_norm,
        }
    }

    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn posting_list(&self, term: &str) -> Option<&PostingList> {
        self.dictionary.get(term)
    }

    pub fn num_terms(&self) -> usize {
        self.dictionary.len()
    }

    pub fn total_postings(&self) -> usize {
        self.dictionary.values().map(|p| p.docs.len()).sum()
    }

    /// Unique in-vocabulary query terms with multiplicity, first-occurrence order.
    pub(crate) fn query_terms<'a>(&'a self, terms: &[String]) -> Vec<(&'a PostingList, f64)> {
        let mut out: Vec<(&PostingList, f64)> = Vec::new();
        for t in terms {
            if let Some(list) = self.dictionary.get(t.as_str()) {
                match out.iter_mut().find(|(l, _)| std::ptr::eq(*l, list)) {
                    Some(entry) => entry.1 += 1.0,
                    None => out.push((list, 1.0)),
                }
            }
        }
        out
    }

    /// BM25 of one document against `query_terms`. Out-of-vocabulary and
    /// absent terms contribute zero.
    pub fn bm25_score(&self, query_terms: &[String], doc: DocOrdinal) -> f64 {
        let norm = self.length_norm[doc.index()];
        self.query_terms(query_terms)
            .into_iter()
            .map(|(list, weight)| match list.tf(doc) {
                0 => 0.0,
                tf => weight * term_score(list.idf, tf, norm, self.params.k1),
            })
            .sum()
    }

    pub fn topk(&self, query_terms: &[String], k: usize) -> RankedList {
        self.topk_with_stats(query_terms, k).0
    }

    pub fn topk_with_stats(&self, query_terms: &[String], k: usize) -> (RankedList, FtsStats) {
        bmw::block_max_wand(self, query_terms, k)
    }

    /// Tokenizes `text` with the index tokenizer and runs top-k.
    pub fn search_text(&self, text: &str, k: usize) -> RankedList {
        self.topk(&self.tokenizer.tokenize(text), k)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::header(FTS_MAGIC, FTS_VERSION);
        w.u64(self.manifest.fingerprint());
        w.f64(self.params.k1);
        w.f64(self.params.b);
        w.u32(self.block_size as u32);
        w.u8(self.tokenizer.lowercase as u8);
        let mut terms: Vec<&PostingList> = self.dictionary.values().collect();
        terms.sort_by(|a, b| a.term.cmp(&b.term));
        w.u64(terms.len() as u64);
        for list in terms {
            w.str(&list.term);
            w.u64(list.docs.len() as u64);
            w.u32s(&list.docs);
            w.u32s(&list.tfs);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8], manifest: &CorpusManifest) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.header(FTS_MAGIC, FTS_VERSION)?;
        let fingerprint = r.u64()?;
        check_fingerprint(fingerprint, manifest)?;
        let params = Bm25Params {
            k1: r.f64()?,
            b: r.f64()?,
        };
        params.validate()?;
        let block_size = r.u32()? as usize;
        if block_size == 0 {
            return Err(Error::InvalidParam("block_size must be positive".into()));
        }
        let tokenizer = Tokenizer {
            lowercase: r.u8()? != 0,
        };
        let n_terms = r.len_prefix()?;
        let mut postings = Vec::with_capacity(n_terms.min(1 << 24));
        for _ in 0..n_terms {
            let term = r.str()?;
            let n = r.len_prefix()?;
            let docs = r.u32s(n)?;
            let tfs = r.u32s(n)?;
            if docs.windows(2).any(|w| w[0] >= w[1])
                || docs.last().is_some_and(|&d| d as usize >= manifest.doc_count())
            {
                return Err(Error::Truncated(format!("corrupt posting list for {term:?}")));
            }
            postings.push((term, docs, tfs));
        }
        Ok(Self::assemble(manifest.clone(), params, block_size, tokenizer, postings))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path, manifest: &CorpusManifest) -> Result<Self> {
        Self::from_bytes(&read_file(path)?, manifest)
    }
}

pub(crate) fn check_fingerprint(found: u64, manifest: &CorpusManifest) -> Result<()> {
    let expected = manifest.fingerprint();
    if found != expected {
        return Err(Error::IndexCorpusMismatch {
            index: found,
            manifest: expected,
        });
    }
    Ok(())
}

/// Reads the corpus at `corpus_path` (the same file `manifest` was built from)
/// and indexes it.
pub fn build_fts_index(
    manifest: &CorpusManifest,
    corpus_path: &Path,
    tokenizer: &Tokenizer,
    params: Bm25Params,
    block_size: usize,
) -> Result<FtsIndex> {
    let records = read_records(corpus_path)?;
    if records.len() != manifest.doc_count()
        || records
            .iter()
            .zip(manifest.external_ids())
            .any(|(r, id)| &r.id != id)
    {
        return Err(Error::IndexCorpusMismatch {
            index: 0,
            manifest: manifest.fingerprint(),
        });
    }
    FtsIndex::build(
        manifest,
        records.iter().map(|r| r.text.as_str()),
        tokenizer,
        params,
        block_size,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> FtsIndex {
        let tok = Tokenizer::default();
        let texts = ["a b a", "b c"];
        let lens = texts.iter().map(|t| tok.tokenize(t).len() as u32).collect();
        let m = CorpusManifest::new(vec!["d1".into(), "d2".into()], lens).unwrap();
        FtsIndex::build(&m, texts, &tok, Bm25Params::default(), DEFAULT_BLOCK_SIZE).unwrap()
    }

    fn q(terms: &[&str]) -> Vec<String> {
        terms.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn postings_match_hand_count() {
        let idx = toy();
        let get = |t: &str| -> Vec<(u32, u32)> {
            idx.posting_list(t)
                .unwrap()
                .postings()
                .map(|(d, f)| (d.0, f))
                .collect()
        };
        assert_eq!(get("a"), vec![(0, 2)]);
        assert_eq!(get("b"), vec![(0, 1), (1, 1)]);
        assert_eq!(get("c"), vec![(1, 1)]);
        assert_eq!(idx.posting_list("b").unwrap().doc_freq(), 2);
    }

    #[test]
    fn hand_derived_bm25() {
        // IDF = ln 2; 2 * 2.2 / (2 + 1.2 * (0.25 + 0.75 * 3 / 2.5)) = 4.4 / 3.38
        let idx = toy();
        let s = idx.bm25_score(&q(&["a"]), DocOrdinal(0));
        let expected = 2f64.ln() * 4.4 / 3.38;
        assert!((s - expected).abs() < 1e-12);
        assert!((s - 0.9023).abs() < 1e-4);
    }

    #[test]
    fn absent_terms_score_zero() {
        let idx = toy();
        assert_eq!(idx.bm25_score(&q(&["a"]), DocOrdinal(1)), 0.0);
        assert_eq!(idx.bm25_score(&q(&["zzz", "yyy"]), DocOrdinal(0)), 0.0);
        assert!(idx.topk(&q(&["zzz"]), 5).is_empty());
        assert!(idx.topk(&[], 5).is_empty());
    }

    #[test]
    fn shorter_doc_wins_on_shared_term() {
        let idx = toy();
        let top = idx.topk(&q(&["b"]), 2);
        assert_eq!(top.docs(), vec![DocOrdinal(1), DocOrdinal(0)]);
        let top = idx.topk(&q(&["c"]), 10);
        assert_eq!(top.len(), 1);
    }

    #[test]
    fn b_zero_removes_length_normalization() {
        let tok = Tokenizer::default();
        let texts = ["x y y y y y", "x"];
        let lens = texts.iter().map(|t| tok.tokenize(t).len() as u32).collect();
        let m = CorpusManifest::new(vec!["a".into(), "b".into()], lens).unwrap();
        let params = Bm25Params { k1: 1.2, b: 0.0 };
        let idx = FtsIndex::build(&m, texts, &tok, params, 64).unwrap();
        let s0 = idx.bm25_score(&q(&["x"]), DocOrdinal(0));
        let s1 = idx.bm25_score(&q(&["x"]), DocOrdinal(1));
        assert_eq!(s0, s1);
    }

    #[test]
    fn single_doc_block_max_is_its_contribution() {
        let tok = Tokenizer::default();
        let m = CorpusManifest::new(vec!["only".into()], vec![3]).unwrap();
        let idx = FtsIndex::build(&m, ["p q p"], &tok, Bm25Params::default(), 64).unwrap();
        for term in ["p", "q"] {
            let list = idx.posting_list(term).unwrap();
            let blocks = list.blocks(64);
            assert_eq!(blocks.len(), 1);
            assert_eq!(blocks[0].1, idx.bm25_score(&q(&[term]), DocOrdinal(0)));
        }
    }

    #[test]
    fn unit_blocks_hold_per_posting_scores() {
        let tok = Tokenizer::default();
        let texts = ["a b", "a a c", "a"];
        let lens = texts.iter().map(|t| tok.tokenize(t).len() as u32).collect();
        let m = CorpusManifest::new(vec!["1".into(), "2".into(), "3".into()], lens).unwrap();
        let idx = FtsIndex::build(&m, texts, &tok, Bm25Params::default(), 1).unwrap();
        let list = idx.posting_list("a").unwrap();
        for ((start, max), (doc, _)) in list.blocks(1).into_iter().zip(list.postings()) {
            assert_eq!(max, idx.bm25_score(&q(&["a"]), doc));
            assert_eq!(start, doc.index());
        }
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(Bm25Params { k1: -1.0, b: 0.5 }.validate().is_err());
        assert!(Bm25Params { k1: 1.0, b: 1.5 }.validate().is_err());
    }

    #[test]
    fn serialization_round_trip_and_fingerprint_guard() {
        let idx = toy();
        let bytes = idx.to_bytes();
        assert_eq!(&bytes[..4], FTS_MAGIC);
        let back = FtsIndex::from_bytes(&bytes, idx.manifest()).unwrap();
        assert_eq!(back.topk(&q(&["b", "a"]), 2), idx.topk(&q(&["b", "a"]), 2));
        let other = CorpusManifest::new(vec!["x".into(), "y".into()], vec![3, 2]).unwrap();
        assert!(matches!(
            FtsIndex::from_bytes(&bytes, &other),
            Err(Error::IndexCorpusMismatch { .. })
        ));
    }
}
