//! JSON engine configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{default_workers, SearchParams};
use crate::dvs::HnswParams;
use crate::error::{Error, Result};
use crate::fts::{Bm25Params, Tokenizer};
use crate::fusion::{FusionConfig, FusionMethod};
use crate::model::PathTag;
use crate::tens::{EmvbParams, EmvbSearchParams};

/// Input and output locations. Relative paths resolve against the config file's directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsSection {
    pub corpus: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub dvec: Option<PathBuf>,
    pub svec: Option<PathBuf>,
    pub tvec: Option<PathBuf>,
    pub index_dir: Option<PathBuf>,
    /// Query-side vectors, one record per query in queries-file order.
    pub query_svec: Option<PathBuf>,
    pub query_dvec: Option<PathBuf>,
    pub query_tvec: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FtsSection {
    pub k1: f64,
    pub b: f64,
    pub block_size: usize,
    pub lowercase: bool,
}

impl Default for FtsSection {
    fn default() -> Self {
        let p = Bm25Params::default();
        Self {
            k1: p.k1,
            b: p.b,
            block_size: crate::fts::DEFAULT_BLOCK_SIZE,
            lowercase: true,
        }
    }
}

impl FtsSection {
    pub fn bm25(&self) -> Bm25Params {
        Bm25Params {
            k1: self.k1,
            b: self.b,
        }
    }

    pub fn tokenizer(&self) -> Tokenizer {
        Tokenizer {
            lowercase: self.lowercase,
        }
    }
}

pub type DvsSection = HnswParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvsSection {
    pub block_size: usize,
    pub alpha: f64,
}

impl Default for SvsSection {
    fn default() -> Self {
        Self {
            block_size: crate::svs::DEFAULT_BLOCK_SIZE,
            alpha: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TensSection {
    pub n_centroids: Option<usize>,
    pub n_subspaces: usize,
    pub n_probe_docs: usize,
    pub centroid_probes: usize,
    pub min_shared: usize,
    pub filter: bool,
    /// Build the accelerated index; otherwise the path scans exhaustively.
    pub emvb: bool,
}

impl Default for TensSection {
    fn default() -> Self {
        let b = EmvbParams::default();
        let s = EmvbSearchParams::default();
        Self {
            n_centroids: b.n_centroids,
            n_subspaces: b.n_subspaces,
            n_probe_docs: s.n_probe_docs,
            centroid_probes: s.centroid_probes,
            min_shared: s.min_shared,
            filter: s.filter,
            emvb: true,
        }
    }
}

impl TensSection {
    pub fn build_params(&self) -> EmvbParams {
        EmvbParams {
            n_centroids: self.n_centroids,
            n_subspaces: self.n_subspaces,
            ..EmvbParams::default()
        }
    }

    pub fn search_params(&self) -> EmvbSearchParams {
        EmvbSearchParams {
            centroid_probes: self.centroid_probes,
            min_shared: self.min_shared,
            n_probe_docs: self.n_probe_docs,
            filter: self.filter,
        }
    }
}

/// How WS weights are chosen when the config does not fix them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WsWeighting {
    #[default]
    Uniform,
    /// Each path weighted by its measured single-path nDCG@k.
    Ndcg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSection {
    /// Closed-loop QPS client threads.
    pub threads: usize,
    pub warmup_queries: usize,
    pub repetitions: usize,
    pub seed: u64,
    /// Scan workers per query; defaults to available parallelism.
    pub engine_workers: Option<usize>,
    pub fusion_methods: Vec<FusionMethod>,
    /// Path combinations to run; all non-empty subsets of `paradigms` when absent.
    pub combinations: Option<Vec<Vec<PathTag>>>,
    pub ws_weighting: WsWeighting,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            threads: 4,
            warmup_queries: 5,
            repetitions: 3,
            seed: 42,
            engine_workers: None,
            fusion_methods: FusionMethod::ALL.to_vec(),
            combinations: None,
            ws_weighting: WsWeighting::Uniform,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub paths: PathsSection,
    pub paradigms: Vec<PathTag>,
    pub fusion: FusionConfig,
    pub fts: FtsSection,
    pub dvs: DvsSection,
    pub svs: SvsSection,
    pub tens: TensSection,
    pub bench: BenchSection,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            paths: PathsSection::default(),
            paradigms: PathTag::SCANS.to_vec(),
            fusion: FusionConfig::default(),
            fts: FtsSection::default(),
            dvs: DvsSection::default(),
            svs: SvsSection::default(),
            tens: TensSection::default(),
            bench: BenchSection::default(),
        }
    }
}

impl EngineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(base) = path.parent() {
            cfg.paths.resolve(base);
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.paradigms.is_empty() {
            return Err(Error::NoPaths);
        }
        if self.paradigms.contains(&PathTag::Fused) {
            return Err(Error::Config("FUSED is not a paradigm".into()));
        }
        self.fts.bm25().validate()?;
        self.dvs.validate()?;
        if self.svs.block_size == 0 || self.fts.block_size == 0 {
            return Err(Error::Config("block_size must be positive".into()));
        }
        if self.svs.alpha.is_nan() || self.svs.alpha < 1.0 {
            return Err(Error::Config(format!("svs.alpha must be >= 1, got {}", self.svs.alpha)));
        }
        if self.bench.repetitions == 0 || self.bench.threads == 0 {
            return Err(Error::Config("bench.repetitions and bench.threads must be positive".into()));
        }
        self.fusion.validate(self.paradigms.len())
    }

    pub fn search_params(&self) -> SearchParams {
        SearchParams {
            svs_alpha: self.svs.alpha,
            ef_search: self.dvs.ef_search,
            emvb: self.tens.search_params(),
            workers: self.bench.engine_workers.unwrap_or_else(default_workers),
        }
    }

    pub fn index_dir(&self) -> Result<&Path> {
        self.paths
            .index_dir
            .as_deref()
            .ok_or_else(|| Error::Config("paths.index_dir is required".into()))
    }

    pub fn require(&self, what: &str, p: &Option<PathBuf>) -> Result<PathBuf> {
        p.clone()
            .ok_or_else(|| Error::Config(format!("paths.{what} is required")))
    }
}

impl PathsSection {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.corpus,
            &mut self.queries,
            &mut self.qrels,
            &mut self.dvec,
            &mut self.svec,
            &mut self.tvec,
            &mut self.index_dir,
            &mut self.query_svec,
            &mut self.query_dvec,
            &mut self.query_tvec,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}
