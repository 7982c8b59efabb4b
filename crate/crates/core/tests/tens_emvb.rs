mod common;

use std::collections::HashSet;
use std::sync::OnceLock;

use common::*;
use hsearch::tens::{kmeans, maxsim, tens_topk_bruteforce, EmvbIndex, EmvbParams, EmvbSearchParams, TensorStore};
use hsearch::{CorpusManifest, DocOrdinal, TokenTensor};
use proptest::prelude::*;

struct Fixture {
    store: TensorStore,
    queries: Vec<TokenTensor>,
    index: EmvbIndex,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let data = synth(1000, 7);
        let store = TensorStore::from_tensors(data.spec.tensor_dim, &data.doc_tensors).unwrap();
        let index = EmvbIndex::build(&store, EmvbParams::default(), 1).unwrap();
        Fixture { store, queries: data.query_tensors, index }
    })
}

fn manifest(n: usize) -> CorpusManifest {
    CorpusManifest::new((0..n).map(|i| format!("d{i}")).collect(), vec![1; n]).unwrap()
}

#[test]
fn bruteforce_matches_oracle() {
    let f = fixture();
    for q in f.queries.iter().take(10) {
        let got = hits(&tens_topk_bruteforce(&f.store, q, 10).unwrap());
        let scored = (0..f.store.len())
            .map(|d| (d as u32, maxsim_oracle(q, &f.store.get(DocOrdinal(d as u32)).unwrap())))
            .collect();
        let want = rank(scored, 10);
        assert_eq!(ordinals(&got), ordinals(&want));
        for (g, w) in got.iter().zip(&want) {
            assert!(rel_close(g.1, w.1, 1e-9));
        }
    }
}

#[test]
fn unfiltered_full_rescore_equals_bruteforce() {
    let f = fixture();
    let params = EmvbSearchParams {
        filter: false,
        n_probe_docs: f.store.len(),
        ..EmvbSearchParams::default()
    };
    for q in &f.queries {
        let a = f.index.search(&f.store, q, 10, &params).unwrap();
        let b = tens_topk_bruteforce(&f.store, q, 10).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn default_search_recall() {
    let f = fixture();
    let mut found = 0;
    for q in &f.queries {
        let truth: HashSet<_> = tens_topk_bruteforce(&f.store, q, 10).unwrap().docs().into_iter().collect();
        let got = f.index.search(&f.store, q, 10, &EmvbSearchParams::default()).unwrap();
        found += got.docs().iter().filter(|d| truth.contains(d)).count();
    }
    let recall = found as f64 / (10 * f.queries.len()) as f64;
    assert!(recall >= 0.95, "recall@10 = {recall:.3}");
}

#[test]
fn returned_scores_are_exact_maxsim() {
    let f = fixture();
    for q in f.queries.iter().take(10) {
        for h in f.index.search(&f.store, q, 10, &EmvbSearchParams::default()).unwrap().hits {
            let exact = maxsim_oracle(q, &f.store.get(h.doc).unwrap());
            assert!((h.score - exact).abs() <= 1e-6 * exact.abs().max(1.0));
        }
    }
}

#[test]
fn filter_keeps_only_docs_near_the_query() {
    // Three one-token documents on distinct axes; each token is its own centroid.
    let axis = |i: usize| {
        let mut v = vec![0.0f32; 8];
        v[i] = 1.0;
        v
    };
    let docs: Vec<TokenTensor> = (0..3).map(|i| TokenTensor::new(8, axis(i)).unwrap()).collect();
    let store = TensorStore::from_tensors(8, &docs).unwrap();
    let index = EmvbIndex::build(
        &store,
        EmvbParams { n_centroids: Some(3), n_subspaces: 8, train_per_centroid: 16 },
        0,
    )
    .unwrap();
    let q = TokenTensor::new(8, axis(1)).unwrap();
    let params = EmvbSearchParams { centroid_probes: 1, ..EmvbSearchParams::default() };
    assert_eq!(index.candidates(&q, &params), vec![DocOrdinal(1)]);
    let two = TokenTensor::new(8, [axis(0), axis(2)].concat()).unwrap();
    assert_eq!(index.candidates(&two, &params), vec![DocOrdinal(0), DocOrdinal(2)]);
    let strict = EmvbSearchParams { min_shared: 2, ..params };
    assert!(index.candidates(&two, &strict).is_empty());
    let top = index.search(&store, &q, 3, &params).unwrap();
    assert_eq!(top.docs(), vec![DocOrdinal(1)]);
    assert!((top.hits[0].score - 1.0).abs() < 1e-12);
}

#[test]
fn more_subspaces_reconstruct_better() {
    let f = fixture();
    let coarse = f.index.reconstruction_error(&f.store).unwrap();
    let fine = EmvbIndex::build(&f.store, EmvbParams { n_subspaces: 16, ..EmvbParams::default() }, 1)
        .unwrap()
        .reconstruction_error(&f.store)
        .unwrap();
    assert!(fine < coarse, "{fine} !< {coarse}");
}

#[test]
fn build_is_seed_deterministic() {
    let tensors = random_tensors(200, 16, (4, 12), 3);
    let store = TensorStore::from_tensors(16, &tensors).unwrap();
    let m = manifest(200);
    let a = EmvbIndex::build(&store, EmvbParams::default(), 9).unwrap();
    let b = EmvbIndex::build(&store, EmvbParams::default(), 9).unwrap();
    assert_eq!(a.to_bytes(&m), b.to_bytes(&m));
    let round = EmvbIndex::from_bytes(&a.to_bytes(&m), &m).unwrap();
    assert_eq!(round, a);
    assert!(EmvbIndex::from_bytes(&a.to_bytes(&m), &manifest(201)).is_err());
}

#[test]
fn file_backed_store_gives_same_results() {
    let tensors = random_tensors(150, 16, (3, 9), 4);
    let mem = TensorStore::from_tensors(16, &tensors).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.tvec");
    mem.write(&path).unwrap();
    let file = TensorStore::open(&path).unwrap();
    assert!(file.is_file_backed());
    assert!(file.resident_bytes() < mem.resident_bytes());
    let q = &random_tensors(1, 16, (4, 4), 5)[0];
    assert_eq!(tens_topk_bruteforce(&mem, q, 10).unwrap(), tens_topk_bruteforce(&file, q, 10).unwrap());
    for d in 0..150u32 {
        assert_eq!(mem.get(DocOrdinal(d)).unwrap(), file.get(DocOrdinal(d)).unwrap());
    }
}

#[test]
fn kmeans_on_distinct_points_recovers_them() {
    let mut r = rng(12);
    let pts: Vec<f32> = (0..20).flat_map(|i| vec![i as f32 * 3.0, (i % 4) as f32]).collect();
    let c = kmeans::train(&pts, 2, 20, 20, &mut r);
    let assign = kmeans::assign(&pts, 2, &c);
    let distinct: HashSet<_> = assign.iter().collect();
    assert_eq!(distinct.len(), 20);
    for (i, &a) in assign.iter().enumerate() {
        assert_eq!(&c[a as usize * 2..a as usize * 2 + 2], &pts[i * 2..i * 2 + 2]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn maxsim_matches_oracle(seed in 0u64..10_000, nq in 1usize..6, nd in 1usize..9) {
        let q = &random_tensors(1, 8, (nq, nq), seed)[0];
        let d = &random_tensors(1, 8, (nd, nd), seed + 1)[0];
        prop_assert!(rel_close(maxsim(q, d).unwrap(), maxsim_oracle(q, d), 1e-12));
    }

    #[test]
    fn self_similarity_is_token_count(seed in 0u64..10_000, n in 1usize..8) {
        let t = &random_tensors(1, 16, (n, n), seed)[0];
        prop_assert!((maxsim(t, t).unwrap() - n as f64).abs() < 1e-5);
    }
}
