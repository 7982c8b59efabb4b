//! Relevance judgments in TREC layout.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Qrels {
    by_query: BTreeMap<String, HashMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, qid: &str, docid: &str, rel: u32) {
        self.by_query
            .entry(qid.to_string())
            .or_default()
            .insert(docid.to_string(), rel);
    }

    /// Judgments for one query; empty when the query was never judged.
    pub fn get(&self, qid: &str) -> HashMap<String, u32> {
        self.by_query.get(qid).cloned().unwrap_or_default()
    }

    pub fn judged(&self, qid: &str) -> Option<&HashMap<String, u32>> {
        self.by_query.get(qid)
    }

    pub fn num_queries(&self) -> usize {
        self.by_query.len()
    }

    /// Lines `qid 0 docid rel`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut q = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = |reason: &str| Error::MalformedLine {
                line: i + 1,
                reason: reason.to_string(),
            };
            if f.len() != 4 {
                return Err(bad("expected 4 fields: qid iter docid rel"));
            }
            let rel: i64 = f[3].parse().map_err(|_| bad("relevance is not an integer"))?;
            if rel < 0 {
                return Err(bad("relevance must be >= 0"));
            }
            q.insert(f[0], f[2], rel as u32);
        }
        Ok(q)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sorted by query then document id.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (qid, docs) in &self.by_query {
            let mut docs: Vec<_> = docs.iter().collect();
            docs.sort();
            for (d, r) in docs {
                writeln!(out, "{qid} 0 {d} {r}").unwrap();
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
