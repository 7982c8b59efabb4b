//! Benchmark runner over path combinations and fusion methods.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{mean_defined, ndcg_at_k, LatencyStats};
use super::probe::{release_free_memory, rss_bytes, RssProbe, SAMPLE_INTERVAL};
use super::qrels::Qrels;
use crate::engine::{
    load_indexes, plan, save_indexes, EngineConfig, EngineHandle, IndexFiles, LoadOptions,
    QueryPayloads, QuerySpec, WsWeighting,
};
use crate::error::{Error, Result};
use crate::fusion::{FusionConfig, FusionMethod};
use crate::model::{read_dense, read_records, read_sparse, read_tensors, PathTag, RankedList};

/// Queries with every payload the config provides.
#[derive(Clone, Debug, PartialEq)]
pub struct QuerySet {
    pub ids: Vec<String>,
    pub payloads: Vec<QueryPayloads>,
}

impl QuerySet {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn load(cfg: &EngineConfig) -> Result<Self> {
        let records = read_records(&cfg.require("queries", &cfg.paths.queries)?)?;
        let n = records.len();
        let mut payloads: Vec<QueryPayloads> = records
            .iter()
            .map(|r| QueryPayloads {
                text: Some(r.text.clone()),
                ..QueryPayloads::default()
            })
            .collect();
        let check = |len: usize, what: &str| {
            if len == n {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} has {len} records for {n} queries")))
            }
        };
        if let Some(p) = &cfg.paths.query_svec {
            let v = read_sparse(p)?;
            check(v.len(), "query_svec")?;
            payloads.iter_mut().zip(v).for_each(|(q, v)| q.sparse = Some(v));
        }
        if let Some(p) = &cfg.paths.query_dvec {
            let (_, v) = read_dense(p)?;
            check(v.len(), "query_dvec")?;
            payloads.iter_mut().zip(v).for_each(|(q, v)| q.dense = Some(v));
        }
        if let Some(p) = &cfg.paths.query_tvec {
            let (_, v) = read_tensors(p)?;
            check(v.len(), "query_tvec")?;
            payloads.iter_mut().zip(v).for_each(|(q, v)| q.tensor = Some(v));
        }
        Ok(Self {
            ids: records.into_iter().map(|r| r.id).collect(),
            payloads,
        })
    }

    fn has(&self, path: PathTag) -> bool {
        self.payloads.first().is_some_and(|p| match path {
            PathTag::Fts => p.text.is_some(),
            PathTag::Svs => p.sparse.is_some(),
            PathTag::Dvs => p.dense.is_some(),
            PathTag::Tens => p.tensor.is_some(),
            PathTag::Fused => false,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub combination: Vec<PathTag>,
    pub fusion: FusionMethod,
    pub k: usize,
    pub ndcg_at_k: f64,
    /// Queries with at least one relevant document.
    pub queries_evaluated: usize,
    pub latency: LatencyStats,
    pub qps: f64,
    pub qps_threads: usize,
    pub index_bytes: u64,
    pub build_peak_bytes: u64,
    /// Peak resident size while loading and querying, above the pre-load baseline.
    pub query_peak_bytes: u64,
    pub single_path_ndcg: BTreeMap<PathTag, f64>,
    /// Hash of every fused list, for determinism checks.
    pub digest: String,
    /// All repetitions produced identical fused lists.
    pub repetitions_identical: bool,
    pub mean_tensors_loaded: Option<f64>,
}

impl BenchReport {
    pub fn label(&self) -> String {
        combination_label(&self.combination)
    }
}

pub fn combination_label(paths: &[PathTag]) -> String {
    paths.iter().map(|p| p.as_str()).collect::<Vec<_>>().join("+")
}

/// Every non-empty subset of `paths`, smallest first, canonical order within.
pub fn all_combinations(paths: &[PathTag]) -> Vec<Vec<PathTag>> {
    let paths: Vec<PathTag> = PathTag::SCANS.into_iter().filter(|p| paths.contains(p)).collect();
    let mut out: Vec<Vec<PathTag>> = (1u32..(1 << paths.len()))
        .map(|mask| {
            paths
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, &p)| p)
                .collect()
        })
        .collect();
    out.sort_by_key(|c: &Vec<PathTag>| c.len());
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub reports: Vec<BenchReport>,
    pub build_peak_bytes: u64,
    pub build_seconds: f64,
    pub single_path_ndcg: BTreeMap<PathTag, f64>,
}

/// Hex sha256 over query ids and every hit's ordinal and score bits.
pub fn results_digest(ids: &[String], lists: &[RankedList]) -> String {
    let mut h = Sha256::new();
    for (id, list) in ids.iter().zip(lists) {
        h.update(id.as_bytes());
        h.update([0u8]);
        for hit in &list.hits {
            h.update(hit.doc.0.to_le_bytes());
            h.update(hit.score.to_bits().to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Mean nDCG@k of ranked lists against qrels.
pub fn evaluate(
    doc_ids: &[String],
    query_ids: &[String],
    lists: &[RankedList],
    qrels: &Qrels,
    k: usize,
) -> (f64, usize) {
    let per: Vec<Option<f64>> = query_ids
        .iter()
        .zip(lists)
        .map(|(qid, list)| {
            let ranking: Vec<&str> = list.hits.iter().map(|h| doc_ids[h.doc.index()].as_str()).collect();
            ndcg_at_k(&ranking, &qrels.get(qid), k)
        })
        .collect();
    (mean_defined(&per), per.iter().flatten().count())
}

fn spec_for(
    combo: &[PathTag],
    payloads: &QueryPayloads,
    fusion: &FusionConfig,
) -> QuerySpec {
    QuerySpec::new(combo, payloads.clone(), fusion.clone())
}

/// Runs every query once and returns the fused lists.
pub fn run_queries(
    handle: &EngineHandle,
    queries: &QuerySet,
    combo: &[PathTag],
    fusion: &FusionConfig,
) -> Result<Vec<RankedList>> {
    queries
        .payloads
        .iter()
        .map(|p| Ok(handle.search(&spec_for(combo, p, fusion))?.fused))
        .collect()
}

fn index_bytes(files: &IndexFiles, combo: &[PathTag], store: bool) -> u64 {
    let size = |p: std::path::PathBuf| std::fs::metadata(p).map_or(0, |m| m.len());
    let mut total = size(files.manifest()) + size(files.manifest().with_extension("doclens"));
    for &p in combo {
        total += match p {
            PathTag::Fts => size(files.fts()),
            PathTag::Svs => size(files.svs()),
            PathTag::Dvs => size(files.dvs()),
            PathTag::Tens => size(files.emvb()),
            PathTag::Fused => 0,
        };
    }
    if store || combo.contains(&PathTag::Tens) {
        total += size(files.tvec()) + size(crate::tens::offsets_path(&files.tvec()));
    }
    total
}

/// Builds and saves every configured index, sampling resident memory.
pub fn build_phase(cfg: &EngineConfig) -> Result<(EngineHandle, u64, f64)> {
    let probe = RssProbe::start(SAMPLE_INTERVAL);
    let t = Instant::now();
    let handle = EngineHandle::build(cfg)?;
    save_indexes(&handle, cfg.index_dir()?)?;
    let secs = t.elapsed().as_secs_f64();
    Ok((handle, probe.stop().peak_bytes, secs))
}

pub fn run_benchmark(cfg: &EngineConfig) -> Result<BenchRun> {
    cfg.validate()?;
    let queries = QuerySet::load(cfg)?;
    let qrels = Qrels::read(&cfg.require("qrels", &cfg.paths.qrels)?)?;
    let k = cfg.fusion.k;
    let (handle, build_peak, build_seconds) = build_phase(cfg)?;

    let mut single = BTreeMap::new();
    for &p in &cfg.paradigms {
        if queries.has(p) {
            let lists = run_queries(&handle, &queries, &[p], &cfg.fusion)?;
            single.insert(p, evaluate(handle.manifest.external_ids(), &queries.ids, &lists, &qrels, k).0);
        }
    }
    drop(handle);

    let combos = match &cfg.bench.combinations {
        Some(c) => c.clone(),
        None => all_combinations(&cfg.paradigms),
    };
    let mut reports = Vec::new();
    for combo in &combos {
        if let Some(p) = combo.iter().find(|p| !queries.has(**p)) {
            return Err(Error::MissingPayload(*p));
        }
        for &method in &cfg.bench.fusion_methods {
            if method == FusionMethod::Trf && !queries.has(PathTag::Tens) {
                continue;
            }
            let mut fusion = cfg.fusion.clone();
            fusion.method = method;
            if method == FusionMethod::Ws
                && fusion.weights.is_none()
                && cfg.bench.ws_weighting == WsWeighting::Ndcg
                && combo.iter().any(|p| single.get(p).copied().unwrap_or(0.0) > 0.0)
            {
                fusion.weights = Some(combo.iter().map(|p| (*p, single.get(p).copied().unwrap_or(0.0))).collect());
            }
            let mut r = run_config(cfg, combo, &fusion, &queries, &qrels)?;
            r.build_peak_bytes = build_peak;
            r.single_path_ndcg = single.clone();
            reports.push(r);
        }
    }
    Ok(BenchRun {
        reports,
        build_peak_bytes: build_peak,
        build_seconds,
        single_path_ndcg: single,
    })
}

/// Benchmarks one (combination, fusion) pair against freshly loaded indexes.
pub fn run_config(
    cfg: &EngineConfig,
    combo: &[PathTag],
    fusion: &FusionConfig,
    queries: &QuerySet,
    qrels: &Qrels,
) -> Result<BenchReport> {
    let dir = cfg.index_dir()?;
    let files = IndexFiles::new(dir);
    let needs_store = fusion.method == FusionMethod::Trf || combo.contains(&PathTag::Tens);

    release_free_memory();
    let baseline = rss_bytes().unwrap_or(0);
    let probe = RssProbe::start(SAMPLE_INTERVAL);
    let handle = load_indexes(dir, &LoadOptions::for_paths(combo, needs_store, cfg.search_params()))?;
    let specs: Vec<QuerySpec> = queries.payloads.iter().map(|p| spec_for(combo, p, fusion)).collect();
    let plans = specs.iter().map(plan).collect::<Result<Vec<_>>>()?;

    for p in plans.iter().take(cfg.bench.warmup_queries) {
        handle.execute(p)?;
    }
    let mut samples = Vec::with_capacity(plans.len() * cfg.bench.repetitions);
    let mut first: Vec<RankedList> = Vec::new();
    let mut identical = true;
    let mut loaded = 0usize;
    for rep in 0..cfg.bench.repetitions {
        let mut lists = Vec::with_capacity(plans.len());
        for p in &plans {
            let t = Instant::now();
            let out = handle.execute(p)?;
            samples.push(t.elapsed());
            if rep == 0 {
                loaded += out.trf.map_or(0, |s| s.tensors_loaded);
            }
            lists.push(out.fused);
        }
        if rep == 0 {
            first = lists;
        } else if lists != first {
            identical = false;
        }
    }
    let threads = cfg.bench.threads;
    let qps = closed_loop_qps(&handle, &plans, threads)?;
    let peak = probe.stop().peak_bytes;

    let (ndcg, evaluated) = evaluate(handle.manifest.external_ids(), &queries.ids, &first, qrels, fusion.k);
    Ok(BenchReport {
        combination: combo.to_vec(),
        fusion: fusion.method,
        k: fusion.k,
        ndcg_at_k: ndcg,
        queries_evaluated: evaluated,
        latency: LatencyStats::from_samples(&samples),
        qps,
        qps_threads: threads,
        index_bytes: index_bytes(&files, combo, needs_store),
        build_peak_bytes: 0,
        query_peak_bytes: peak.saturating_sub(baseline),
        single_path_ndcg: BTreeMap::new(),
        digest: results_digest(&queries.ids, &first),
        repetitions_identical: identical,
        mean_tensors_loaded: (fusion.method == FusionMethod::Trf)
            .then(|| loaded as f64 / plans.len().max(1) as f64),
    })
}

/// Shortest window a QPS measurement may cover; the batch is replayed until
/// it is reached so thread start-up does not dominate fast configurations.
pub const QPS_MIN_WINDOW: Duration = Duration::from_millis(100);
const QPS_MAX_PASSES: usize = 1000;

/// Closed-loop throughput: `threads` clients pull queries from a shared
/// queue holding whole passes over `plans`, until one pass has finished
/// and `QPS_MIN_WINDOW` has elapsed.
pub fn closed_loop_qps(
    handle: &EngineHandle,
    plans: &[crate::engine::QueryPlan],
    threads: usize,
) -> Result<f64> {
    if plans.is_empty() {
        return Ok(0.0);
    }
    let n = plans.len();
    let next = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);
    let t = Instant::now();
    let results: Vec<Result<()>> = std::thread::scope(|s| {
        let workers: Vec<_> = (0..threads.max(1))
            .map(|_| {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n * QPS_MAX_PASSES || (i >= n && t.elapsed() >= QPS_MIN_WINDOW) {
                        return Ok(());
                    }
                    handle.execute(&plans[i % n])?;
                    done.fetch_add(1, Ordering::Relaxed);
                })
            })
            .collect();
        workers.into_iter().map(|w| w.join().expect("client thread")).collect()
    });
    results.into_iter().collect::<Result<()>>()?;
    let secs = t.elapsed().max(Duration::from_nanos(1)).as_secs_f64();
    Ok(done.load(Ordering::Relaxed) as f64 / secs)
}

/// Index directory exists with a manifest.
pub fn has_indexes(dir: &Path) -> bool {
    IndexFiles::new(dir).manifest().exists()
}
