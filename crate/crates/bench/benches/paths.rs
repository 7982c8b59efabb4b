use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use hsearch::bench::{generate_synthetic, QuerySet, SynthSpec};
use hsearch::engine::{EngineConfig, EngineHandle, QuerySpec};
use hsearch::fusion::{rrf_fuse, FusionConfig, FusionMethod};
use hsearch::PathTag;

struct Fixture {
    handle: EngineHandle,
    queries: QuerySet,
    dir: std::path::PathBuf,
}

fn fixture() -> Fixture {
    let dir = std::env::temp_dir().join(format!("hsearch-bench-{}", std::process::id()));
    let spec = SynthSpec { doc_count: 2000, n_queries: 20, seed: 11, ..SynthSpec::default() };
    let files = generate_synthetic(&spec).expect("synth").write(&dir).expect("write synth");
    let cfg = EngineConfig::load(&files.config()).expect("config");
    let handle = EngineHandle::build(&cfg).expect("build");
    let queries = QuerySet::load(&cfg).expect("queries");
    Fixture { handle, queries, dir }
}

fn run_all(f: &Fixture, paths: &[PathTag], fusion: &FusionConfig) -> usize {
    let mut n = 0;
    for p in &f.queries.payloads {
        let spec = QuerySpec::new(paths, p.clone(), fusion.clone());
        n += f.handle.search(&spec).expect("search").fused.hits.len();
    }
    n
}

fn bench(c: &mut Criterion) {
    let f = fixture();

    let mut group = c.benchmark_group("single_path");
    group.sample_size(10);
    let rrf = FusionConfig::with_method(FusionMethod::Rrf);
    for path in PathTag::SCANS {
        group.bench_function(path.as_str(), |b| b.iter(|| black_box(run_all(&f, &[path], &rrf))));
    }
    group.finish();

    let mut group = c.benchmark_group("fusion");
    group.sample_size(10);
    let three = [PathTag::Fts, PathTag::Svs, PathTag::Dvs];
    for method in [FusionMethod::Rrf, FusionMethod::Ws, FusionMethod::Trf] {
        let cfg = FusionConfig::with_method(method);
        group.bench_function(method.as_str(), |b| b.iter(|| black_box(run_all(&f, &three, &cfg))));
    }

    // Fusion alone, on lists already retrieved.
    let lists: Vec<_> = f
        .queries
        .payloads
        .iter()
        .map(|p| f.handle.search(&QuerySpec::new(&three, p.clone(), rrf.clone())).expect("search").path_lists)
        .collect();
    group.bench_function("rrf_fuse_only", |b| {
        b.iter(|| {
            for l in &lists {
                black_box(rrf_fuse(l, rrf.kappa, rrf.k));
            }
        })
    });
    group.finish();

    let _ = std::fs::remove_dir_all(&f.dir);
}

criterion_group!(benches, bench);
criterion_main!(benches);
