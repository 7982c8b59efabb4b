use std::collections::HashSet;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fts::Tokenizer;

/// One line of a corpus or queries file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub text: String,
}

/// Reads a JSON-lines corpus. Blank lines are skipped; ids must be unique.
pub fn read_records(path: &Path) -> Result<Vec<CorpusRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        records.push(rec);
    }
    Ok(records)
}

/// External ids and length statistics of an ingested corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    external_ids: Vec<String>,
    doc_lens: Vec<u32>,
    avg_doc_len: f64,
}

impl CorpusManifest {
    pub fn new(external_ids: Vec<String>, doc_lens: Vec<u32>) -> Result<Self> {
        if external_ids.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if external_ids.len() != doc_lens.len() {
            return Err(Error::InvalidParam(format!(
                "{} ids but {} lengths",
                external_ids.len(),
                doc_lens.len()
            )));
        }
        if external_ids.len() > u32::MAX as usize {
            return Err(Error::InvalidParam("corpus exceeds 2^32 documents".into()));
        }
        let mut seen = HashSet::with_capacity(external_ids.len());
        for id in &external_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        let total: u64 = doc_lens.iter().map(|&l| l as u64).sum();
        let avg_doc_len = total as f64 / doc_lens.len() as f64;
        Ok(Self {
            external_ids,
            doc_lens,
            avg_doc_len,
        })
    }

    pub fn from_records(records: &[CorpusRecord], tokenizer: &Tokenizer) -> Result<Self> {
        let ids = records.iter().map(|r| r.id.clone()).collect();
        let lens = records
            .iter()
            .map(|r| tokenizer.tokenize(&r.text).len() as u32)
            .collect();
        Self::new(ids, lens)
    }

    pub fn doc_count(&self) -> usize {
        self.external_ids.len()
    }

    pub fn external_ids(&self) -> &[String] {
        &self.external_ids
    }

    pub fn external_id(&self, ordinal: super::DocOrdinal) -> &str {
        &self.external_ids[ordinal.index()]
    }

    pub fn doc_lens(&self) -> &[u32] {
        &self.doc_lens
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    /// Stable 64-bit identity of the corpus, stamped into every index header.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        for (id, len) in self.external_ids.iter().zip(&self.doc_lens) {
            h.update(id.as_bytes());
            h.update([0u8]);
            h.update(len.to_le_bytes());
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    /// Writes the `.manifest` sidecar (one id per line) and a `.doclens` sidecar.
    pub fn save(&self, manifest_path: &Path) -> Result<()> {
        let mut ids = String::new();
        for id in &self.external_ids {
            ids.push_str(id);
            ids.push('\n');
        }
        std::fs::write(manifest_path, ids).map_err(|e| Error::io(manifest_path, e))?;
        let lens_path = manifest_path.with_extension("doclens");
        let lens: String = self.doc_lens.iter().map(|l| format!("{l}\n")).collect();
        std::fs::write(&lens_path, lens).map_err(|e| Error::io(&lens_path, e))
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let ids_text =
            std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let ids: Vec<String> = ids_text.lines().map(str::to_owned).collect();
        let lens_path = manifest_path.with_extension("doclens");
        let lens_text =
            std::fs::read_to_string(&lens_path).map_err(|e| Error::io(&lens_path, e))?;
        let lens = lens_text
            .lines()
            .enumerate()
            .map(|(i, l)| {
                l.trim().parse::<u32>().map_err(|e| Error::MalformedLine {
                    line: i + 1,
                    reason: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(ids, lens)
    }
}

/// Reads a corpus file and builds its manifest; ordinals follow line order.
pub fn load_corpus(path: &Path, tokenizer: &Tokenizer) -> Result<CorpusManifest> {
    let records = read_records(path)?;
    CorpusManifest::from_records(&records, tokenizer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn two_doc_corpus_statistics() {
        let f = write_tmp("{\"id\":\"d1\",\"text\":\"a b a\"}\n{\"id\":\"d2\",\"text\":\"b c\"}\n");
        let m = load_corpus(f.path(), &Tokenizer::default()).unwrap();
        assert_eq!(m.doc_count(), 2);
        assert_eq!(m.doc_lens(), &[3, 2]);
        assert!((m.avg_doc_len() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let f = write_tmp("");
        assert!(matches!(
            load_corpus(f.path(), &Tokenizer::default()),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn duplicate_id_is_reported() {
        let f = write_tmp("{\"id\":\"d1\",\"text\":\"x\"}\n{\"id\":\"d1\",\"text\":\"y\"}\n");
        match load_corpus(f.path(), &Tokenizer::default()) {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "d1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_tmp("{\"id\":\"d1\",\"text\":\"x\"}\nnot json\n");
        match load_corpus(f.path(), &Tokenizer::default()) {
            Err(Error::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sidecar_round_trip_preserves_fingerprint() {
        let m = CorpusManifest::new(vec!["x".into(), "y".into()], vec![4, 1]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("corpus.manifest");
        m.save(&p).unwrap();
        let back = CorpusManifest::load(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.fingerprint(), m.fingerprint());
        let other = CorpusManifest::new(vec!["y".into(), "x".into()], vec![4, 1]).unwrap();
        assert_ne!(other.fingerprint(), m.fingerprint());
    }
}
