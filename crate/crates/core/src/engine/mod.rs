//! Hybrid query planning and execution over loaded path indexes.

mod config;
mod persist;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use crate::dvs::DvsIndex;
use crate::error::{Error, Result};
use crate::fts::FtsIndex;
use crate::fusion::{rrf_fuse, trf_rerank, ws_fuse, FusionConfig, FusionMethod, TrfStats};
use crate::model::{
    CorpusManifest, DenseVector, PathTag, RankedList, SparseVector, TokenTensor,
};
use crate::svs::SvsIndex;
use crate::tens::{tens_topk_bruteforce, EmvbIndex, EmvbSearchParams, TensorStore};

pub use config::{
    BenchSection, DvsSection, EngineConfig, FtsSection, PathsSection, SvsSection, TensSection,
    WsWeighting,
};
pub use persist::{index_bytes_on_disk, load_indexes, save_indexes, IndexFiles, LoadOptions};

/// Query payloads for every path a query may touch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QueryPayloads {
    pub text: Option<String>,
    pub sparse: Option<SparseVector>,
    pub dense: Option<DenseVector>,
    pub tensor: Option<TokenTensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuerySpec {
    pub paths: Vec<PathTag>,
    pub payloads: QueryPayloads,
    pub fusion: FusionConfig,
}

impl QuerySpec {
    pub fn new(paths: &[PathTag], payloads: QueryPayloads, fusion: FusionConfig) -> Self {
        Self {
            paths: paths.to_vec(),
            payloads,
            fusion,
        }
    }

    fn has_payload(&self, path: PathTag) -> bool {
        match path {
            PathTag::Fts => self.payloads.text.is_some(),
            PathTag::Svs => self.payloads.sparse.is_some(),
            PathTag::Dvs => self.payloads.dense.is_some(),
            PathTag::Tens => self.payloads.tensor.is_some(),
            PathTag::Fused => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PlanNode {
    Scan(PathTag),
    Fusion {
        method: FusionMethod,
        /// Single input forwarded unchanged (truncated to k).
        passthrough: bool,
        needs_tensor_store: bool,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryPlan {
    pub spec: QuerySpec,
    pub nodes: Vec<PlanNode>,
    /// (from, to) node indices.
    pub edges: Vec<(usize, usize)>,
}

impl QueryPlan {
    pub fn sink(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn scans(&self) -> Vec<PathTag> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                PlanNode::Scan(p) => Some(*p),
                _ => None,
            })
            .collect()
    }

    pub fn in_degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e.1 == node).count()
    }

    pub fn out_degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e.0 == node).count()
    }

    /// Kahn's algorithm over the edge list.
    pub fn is_acyclic(&self) -> bool {
        let n = self.nodes.len();
        let mut indeg: Vec<usize> = (0..n).map(|i| self.in_degree(i)).collect();
        let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(u) = ready.pop() {
            seen += 1;
            for &(a, b) in &self.edges {
                if a == u {
                    indeg[b] -= 1;
                    if indeg[b] == 0 {
                        ready.push(b);
                    }
                }
            }
        }
        seen == n
    }
}

/// One scan node per enabled path in canonical order, then one fusion sink.
pub fn plan(spec: &QuerySpec) -> Result<QueryPlan> {
    let mut scans: Vec<PathTag> = PathTag::SCANS
        .into_iter()
        .filter(|p| spec.paths.contains(p))
        .collect();
    scans.dedup();
    if scans.is_empty() {
        return Err(Error::NoPaths);
    }
    if let Some(p) = spec.paths.iter().find(|p| **p == PathTag::Fused) {
        return Err(Error::Config(format!("{p} is not a scan path")));
    }
    for &p in &scans {
        if !spec.has_payload(p) {
            return Err(Error::MissingPayload(p));
        }
    }
    let method = spec.fusion.method;
    if method == FusionMethod::Trf && spec.payloads.tensor.is_none() {
        return Err(Error::MissingPayload(PathTag::Tens));
    }
    spec.fusion.validate(scans.len())?;
    let mut nodes: Vec<PlanNode> = scans.iter().map(|&p| PlanNode::Scan(p)).collect();
    let sink = nodes.len();
    nodes.push(PlanNode::Fusion {
        method,
        passthrough: scans.len() == 1 && method != FusionMethod::Trf,
        needs_tensor_store: method == FusionMethod::Trf,
    });
    Ok(QueryPlan {
        spec: spec.clone(),
        nodes,
        edges: (0..sink).map(|i| (i, sink)).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchParams {
    pub svs_alpha: f64,
    pub ef_search: usize,
    pub emvb: EmvbSearchParams,
    /// Scan worker threads per query.
    pub workers: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            svs_alpha: 1.0,
            ef_search: 100,
            emvb: EmvbSearchParams::default(),
            workers: default_workers(),
        }
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Loaded indexes sharing one manifest.
#[derive(Debug)]
pub struct EngineHandle {
    pub manifest: CorpusManifest,
    pub fts: Option<FtsIndex>,
    pub svs: Option<SvsIndex>,
    pub dvs: Option<DvsIndex>,
    pub tensors: Option<TensorStore>,
    pub emvb: Option<EmvbIndex>,
    pub params: SearchParams,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Timing {
    /// Per scan, in plan order.
    pub scans: Vec<(PathTag, Duration)>,
    pub fusion: Duration,
    pub wall: Duration,
}

impl Timing {
    pub fn max_scan(&self) -> Duration {
        self.scans.iter().map(|s| s.1).max().unwrap_or_default()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryOutput {
    pub fused: RankedList,
    /// Per scan, in plan order.
    pub path_lists: Vec<RankedList>,
    pub timing: Timing,
    pub trf: Option<TrfStats>,
}

impl EngineHandle {
    pub fn new(manifest: CorpusManifest) -> Self {
        Self {
            manifest,
            fts: None,
            svs: None,
            dvs: None,
            tensors: None,
            emvb: None,
            params: SearchParams::default(),
        }
    }

    pub fn has_path(&self, path: PathTag) -> bool {
        match path {
            PathTag::Fts => self.fts.is_some(),
            PathTag::Svs => self.svs.is_some(),
            PathTag::Dvs => self.dvs.is_some(),
            PathTag::Tens => self.tensors.is_some(),
            PathTag::Fused => false,
        }
    }

    /// Bytes held in memory by loaded structures that report their size.
    pub fn resident_index_bytes(&self) -> usize {
        self.tensors.as_ref().map_or(0, |t| t.resident_bytes())
            + self.emvb.as_ref().map_or(0, |e| e.resident_bytes())
    }

    /// Top-k0 list for one path.
    pub fn scan(&self, path: PathTag, spec: &QuerySpec) -> Result<RankedList> {
        let k0 = spec.fusion.k0;
        let p = &spec.payloads;
        match path {
            PathTag::Fts => {
                let idx = self.fts.as_ref().ok_or(Error::IndexNotLoaded(path))?;
                let text = p.text.as_deref().ok_or(Error::MissingPayload(path))?;
                Ok(idx.search_text(text, k0))
            }
            PathTag::Svs => {
                let idx = self.svs.as_ref().ok_or(Error::IndexNotLoaded(path))?;
                let q = p.sparse.as_ref().ok_or(Error::MissingPayload(path))?;
                Ok(idx.topk_with_stats(q, k0, self.params.svs_alpha).0)
            }
            PathTag::Dvs => {
                let idx = self.dvs.as_ref().ok_or(Error::IndexNotLoaded(path))?;
                let q = p.dense.as_ref().ok_or(Error::MissingPayload(path))?;
                idx.topk(q, k0, self.params.ef_search)
            }
            PathTag::Tens => {
                let store = self.tensors.as_ref().ok_or(Error::IndexNotLoaded(path))?;
                let q = p.tensor.as_ref().ok_or(Error::MissingPayload(path))?;
                match &self.emvb {
                    Some(idx) => idx.search(store, q, k0, &self.params.emvb),
                    None => tens_topk_bruteforce(store, q, k0),
                }
            }
            PathTag::Fused => Err(Error::Config("FUSED is not a scan path".into())),
        }
    }

    /// Runs the plan's scans on up to `params.workers` threads; each finished
    /// scan is pushed to the fusion sink, which fuses once all have arrived.
    pub fn execute(&self, plan: &QueryPlan) -> Result<QueryOutput> {
        self.execute_with_workers(plan, self.params.workers)
    }

    pub fn execute_with_workers(&self, plan: &QueryPlan, workers: usize) -> Result<QueryOutput> {
        let start = Instant::now();
        let spec = &plan.spec;
        let scans = plan.scans();
        let n = scans.len();
        let mut slots: Vec<Option<(Result<RankedList>, Duration)>> = (0..n).map(|_| None).collect();

        let run = |i: usize| {
            let t = Instant::now();
            let r = self.scan(scans[i], spec);
            (r, t.elapsed())
        };
        let workers = workers.clamp(1, n);
        if workers == 1 {
            for (i, slot) in slots.iter_mut().enumerate() {
                *slot = Some(run(i));
            }
        } else {
            let next = AtomicUsize::new(0);
            let (tx, rx) = mpsc::channel();
            std::thread::scope(|s| {
                for _ in 0..workers {
                    let tx = tx.clone();
                    let next = &next;
                    let run = &run;
                    s.spawn(move || loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= n {
                            break;
                        }
                        if tx.send((i, run(i))).is_err() {
                            break;
                        }
                    });
                }
                drop(tx);
                for (i, out) in rx.iter().take(n) {
                    slots[i] = Some(out);
                }
            });
        }

        let mut lists = Vec::with_capacity(n);
        let mut timing = Timing::default();
        for (slot, &path) in slots.into_iter().zip(&scans) {
            let (r, dt) = slot.expect("every scan reports");
            let list = r.map_err(|e| Error::PathFailed {
                path,
                source: Box::new(e),
            })?;
            timing.scans.push((path, dt));
            lists.push(list);
        }

        let t = Instant::now();
        let (fused, trf) = self.fuse(plan, &lists)?;
        timing.fusion = t.elapsed();
        timing.wall = start.elapsed();
        Ok(QueryOutput {
            fused,
            path_lists: lists,
            timing,
            trf,
        })
    }

    fn fuse(&self, plan: &QueryPlan, lists: &[RankedList]) -> Result<(RankedList, Option<TrfStats>)> {
        let cfg = &plan.spec.fusion;
        let PlanNode::Fusion {
            method, passthrough, ..
        } = plan.nodes[plan.sink()]
        else {
            unreachable!("plan sink is a fusion node")
        };
        if passthrough {
            let mut out = lists[0].clone().truncated(cfg.k);
            out.path = PathTag::Fused;
            return Ok((out, None));
        }
        match method {
            FusionMethod::Rrf => Ok((rrf_fuse(lists, cfg.kappa, cfg.k), None)),
            FusionMethod::Ws => {
                let weights = cfg.weights_for(&plan.scans());
                Ok((ws_fuse(lists, &weights, cfg.normalization, cfg.k)?, None))
            }
            FusionMethod::Trf => {
                let store = self
                    .tensors
                    .as_ref()
                    .ok_or(Error::IndexNotLoaded(PathTag::Tens))?;
                let q = plan
                    .spec
                    .payloads
                    .tensor
                    .as_ref()
                    .ok_or(Error::MissingPayload(PathTag::Tens))?;
                let (list, stats) = trf_rerank(lists, q, store, cfg.k)?;
                Ok((list, Some(stats)))
            }
        }
    }

    /// Plans and executes in one call.
    pub fn search(&self, spec: &QuerySpec) -> Result<QueryOutput> {
        self.execute(&plan(spec)?)
    }
}
