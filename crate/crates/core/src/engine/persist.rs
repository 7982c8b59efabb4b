//! Index directory layout, save and load.

use std::path::{Path, PathBuf};

use super::{EngineConfig, EngineHandle, SearchParams};
use crate::dvs::DvsIndex;
use crate::error::{Error, Result};
use crate::fts::{build_fts_index, FtsIndex};
use crate::model::{load_corpus, read_dense, read_sparse, CorpusManifest, PathTag};
use crate::svs::SvsIndex;
use crate::tens::{EmvbIndex, TensorStore};

/// File names inside an index directory.
#[derive(Clone, Debug)]
pub struct IndexFiles {
    pub dir: PathBuf,
}

impl IndexFiles {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
        }
    }
    pub fn manifest(&self) -> PathBuf {
        self.dir.join("corpus.manifest")
    }
    pub fn fts(&self) -> PathBuf {
        self.dir.join("fts.ftsidx")
    }
    pub fn svs(&self) -> PathBuf {
        self.dir.join("svs.svsidx")
    }
    pub fn dvs(&self) -> PathBuf {
        self.dir.join("dvs.dvsidx")
    }
    pub fn tvec(&self) -> PathBuf {
        self.dir.join("tens.tvec")
    }
    pub fn emvb(&self) -> PathBuf {
        self.dir.join("tens.emvb")
    }
}

/// Which structures to bring into memory.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadOptions {
    /// Scan paths whose indexes are loaded.
    pub paths: Vec<PathTag>,
    /// Open the tensor store even when TENS is not a scan path (needed by TRF).
    pub tensor_store: bool,
    pub params: SearchParams,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            paths: PathTag::SCANS.to_vec(),
            tensor_store: true,
            params: SearchParams::default(),
        }
    }
}

impl LoadOptions {
    pub fn for_paths(paths: &[PathTag], tensor_store: bool, params: SearchParams) -> Self {
        Self {
            paths: paths.to_vec(),
            tensor_store,
            params,
        }
    }
}

/// Writes the manifest and every loaded index into `dir`.
pub fn save_indexes(handle: &EngineHandle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = IndexFiles::new(dir);
    let m = &handle.manifest;
    m.save(&files.manifest())?;
    if let Some(idx) = &handle.fts {
        idx.save(&files.fts())?;
    }
    if let Some(idx) = &handle.svs {
        idx.save(&files.svs(), m)?;
    }
    if let Some(idx) = &handle.dvs {
        idx.save(&files.dvs(), m)?;
    }
    if let Some(store) = &handle.tensors {
        let target = files.tvec();
        let same = match (store.file_path(), target.canonicalize()) {
            (Some(p), Ok(t)) => p.canonicalize().map(|p| p == t).unwrap_or(false),
            _ => false,
        };
        if !same {
            store.write(&target)?;
        }
    }
    if let Some(idx) = &handle.emvb {
        idx.save(&files.emvb(), m)?;
    }
    Ok(())
}

/// Loads the requested structures from `dir`. Every index is checked against
/// the directory's manifest fingerprint; the tensor store stays on disk.
pub fn load_indexes(dir: &Path, opts: &LoadOptions) -> Result<EngineHandle> {
    let files = IndexFiles::new(dir);
    let manifest = CorpusManifest::load(&files.manifest())?;
    load_with_manifest(&files, manifest, opts)
}

pub(crate) fn load_with_manifest(
    files: &IndexFiles,
    manifest: CorpusManifest,
    opts: &LoadOptions,
) -> Result<EngineHandle> {
    let want = |p| opts.paths.contains(&p);
    let mut h = EngineHandle::new(manifest);
    h.params = opts.params;
    if want(PathTag::Fts) {
        h.fts = Some(FtsIndex::load(&files.fts(), &h.manifest)?);
    }
    if want(PathTag::Svs) {
        h.svs = Some(SvsIndex::load(&files.svs(), &h.manifest)?);
    }
    if want(PathTag::Dvs) {
        h.dvs = Some(DvsIndex::load(&files.dvs(), &h.manifest)?);
    }
    if want(PathTag::Tens) || opts.tensor_store {
        let store = TensorStore::open(&files.tvec())?;
        if store.len() != h.manifest.doc_count() {
            return Err(Error::IndexCorpusMismatch {
                index: store.len() as u64,
                manifest: h.manifest.doc_count() as u64,
            });
        }
        h.tensors = Some(store);
    }
    if want(PathTag::Tens) && files.emvb().exists() {
        h.emvb = Some(EmvbIndex::load(&files.emvb(), &h.manifest)?);
    }
    Ok(h)
}

/// Total size of the regular files in `dir`.
pub fn index_bytes_on_disk(dir: &Path) -> Result<u64> {
    let mut total = 0;
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let meta = entry.metadata().map_err(|e| Error::io(entry.path(), e))?;
        if meta.is_file() {
            total += meta.len();
        }
    }
    Ok(total)
}

impl EngineHandle {
    /// Builds in-memory indexes for the configured paradigms from the
    /// configured input files. The tensor store is built whenever `tvec` is set.
    pub fn build(cfg: &EngineConfig) -> Result<Self> {
        let tokenizer = cfg.fts.tokenizer();
        let corpus = cfg.require("corpus", &cfg.paths.corpus)?;
        let manifest = load_corpus(&corpus, &tokenizer)?;
        let mut h = EngineHandle::new(manifest);
        h.params = cfg.search_params();
        let seed = cfg.bench.seed;
        let want = |p| cfg.paradigms.contains(&p);
        let count_check = |n: usize, m: &CorpusManifest, what: &str| {
            if n != m.doc_count() {
                Err(Error::Config(format!(
                    "{what} has {n} records but the corpus has {}",
                    m.doc_count()
                )))
            } else {
                Ok(())
            }
        };
        if want(PathTag::Fts) {
            h.fts = Some(build_fts_index(
                &h.manifest,
                &corpus,
                &tokenizer,
                cfg.fts.bm25(),
                cfg.fts.block_size,
            )?);
        }
        if want(PathTag::Svs) {
            let v = read_sparse(&cfg.require("svec", &cfg.paths.svec)?)?;
            count_check(v.len(), &h.manifest, "svec")?;
            h.svs = Some(SvsIndex::build(v, cfg.svs.block_size)?);
        }
        if want(PathTag::Dvs) {
            let (_, v) = read_dense(&cfg.require("dvec", &cfg.paths.dvec)?)?;
            count_check(v.len(), &h.manifest, "dvec")?;
            h.dvs = Some(DvsIndex::build(&v, cfg.dvs, seed)?);
        }
        if want(PathTag::Tens) || cfg.paths.tvec.is_some() {
            let store = TensorStore::open(&cfg.require("tvec", &cfg.paths.tvec)?)?;
            count_check(store.len(), &h.manifest, "tvec")?;
            if want(PathTag::Tens) && cfg.tens.emvb {
                h.emvb = Some(EmvbIndex::build(&store, cfg.tens.build_params(), seed)?);
            }
            h.tensors = Some(store);
        }
        Ok(h)
    }
}
