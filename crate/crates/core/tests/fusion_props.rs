mod common;

use std::collections::BTreeSet;

use common::*;
use hsearch::fusion::{candidate_union, rrf_fuse, trf_rerank, ws_fuse, Normalization};
use hsearch::tens::{tens_topk_bruteforce, TensorStore};
use hsearch::{DocOrdinal, PathTag, RankedList, ScoredHit};
use proptest::prelude::*;

fn list(path: PathTag, items: &[(u32, f64)]) -> RankedList {
    RankedList {
        path,
        hits: items.iter().map(|&(d, s)| ScoredHit::new(DocOrdinal(d), s)).collect(),
    }
}

/// A well-formed list over distinct docs below `n` with strictly decreasing scores.
fn ranked(n: u32, max_len: usize) -> impl Strategy<Value = RankedList> {
    (prop::collection::btree_set(0..n, 0..max_len), prop::collection::vec(0.01f64..5.0, max_len), 0.0f64..3.0)
        .prop_map(|(docs, gaps, base)| {
            let mut docs: Vec<u32> = docs.into_iter().collect();
            // deterministic shuffle by the gap values so ranks don't follow ordinals
            docs.sort_by(|a, b| gaps[*a as usize % gaps.len()].total_cmp(&gaps[*b as usize % gaps.len()]).then(a.cmp(b)));
            let mut s = base + gaps.iter().sum::<f64>();
            let hits = docs
                .iter()
                .zip(&gaps)
                .map(|(&d, g)| {
                    s -= g;
                    (d, s)
                })
                .collect::<Vec<_>>();
            list(PathTag::Fts, &hits)
        })
}

#[test]
fn rrf_hand_cases() {
    let a = list(PathTag::Fts, &[(1, 9.0), (2, 8.0)]);
    let b = list(PathTag::Dvs, &[(3, 0.9), (2, 0.8)]);
    let out = rrf_fuse(&[a.clone(), b], 60.0, 10);
    assert_eq!(out.docs(), vec![DocOrdinal(2), DocOrdinal(1), DocOrdinal(3)]);
    assert!((out.hits[0].score - 2.0 / 62.0).abs() < 1e-9);
    assert!((out.hits[1].score - 1.0 / 61.0).abs() < 1e-9);
    let same = rrf_fuse(&[list(PathTag::Fts, &[(7, 1.0)]), list(PathTag::Svs, &[(7, 2.0)])], 60.0, 10);
    assert!((same.hits[0].score - 2.0 / 61.0).abs() < 1e-9);
    assert_eq!(rrf_fuse(&[a], 60.0, 1).len(), 1);
}

#[test]
fn ws_degenerate_weights() {
    let a = list(PathTag::Fts, &[(1, 9.0), (2, 5.0), (3, 1.0)]);
    let b = list(PathTag::Dvs, &[(3, 0.9), (4, 0.1)]);
    let only_a = ws_fuse(&[a.clone(), b.clone()], &[1.0, 0.0], Normalization::Minmax, 10).unwrap();
    assert_eq!(only_a.docs(), a.docs());
    assert_eq!(only_a.hits.iter().map(|h| h.score).collect::<Vec<_>>(), vec![1.0, 0.5, 0.0]);
    let constant = list(PathTag::Svs, &[(5, 2.0), (6, 2.0)]);
    let out = ws_fuse(&[constant], &[1.0], Normalization::Minmax, 10).unwrap();
    assert!(out.hits.iter().all(|h| h.score == 1.0));
    assert!(ws_fuse(&[a], &[1.0, 2.0], Normalization::None, 10).is_err());
}

#[test]
fn trf_equals_bruteforce_when_union_is_corpus() {
    let tensors = random_tensors(120, 16, (2, 10), 21);
    let store = TensorStore::from_tensors(16, &tensors).unwrap();
    let q = &random_tensors(1, 16, (5, 5), 22)[0];
    let first: Vec<(u32, f64)> = (0..70).map(|d| (d, 100.0 - d as f64)).collect();
    let second: Vec<(u32, f64)> = (50..120).rev().map(|d| (d, d as f64)).collect();
    let lists = [list(PathTag::Fts, &first), list(PathTag::Dvs, &second)];
    assert_eq!(candidate_union(&lists).len(), 120);
    let brute = tens_topk_bruteforce(&store, q, 10).unwrap();
    store.reset_loads();
    let (fused, stats) = trf_rerank(&lists, q, &store, 10).unwrap();
    assert_eq!(fused.hits, brute.hits);
    assert_eq!(stats.tensors_loaded, 120);
    assert_eq!(store.loads(), 120);
}

#[test]
fn trf_loads_only_candidates_on_large_corpus() {
    let data = synth(10_000, 13);
    let texts: Vec<String> = data.docs.iter().map(|d| d.text.clone()).collect();
    let fts = fts_index(&texts, 64);
    let store = TensorStore::from_tensors(data.spec.tensor_dim, &data.doc_tensors).unwrap();
    let mut prev = 0;
    for k0 in [10usize, 50, 100, 200] {
        let mut loaded = 0;
        for ((qr, qd), qt) in data.queries.iter().zip(&data.query_dense).zip(&data.query_tensors).take(5) {
            let terms = fts.tokenizer().tokenize(&qr.text);
            let a = fts.topk(&terms, k0);
            let b = hsearch::dvs::dvs_bruteforce(&data.doc_dense, qd, k0);
            let (_, stats) = trf_rerank(&[a, b], qt, &store, 10).unwrap();
            assert!(stats.tensors_loaded <= 2 * k0);
            loaded += stats.tensors_loaded;
        }
        assert!(loaded >= prev);
        assert!(loaded < 5 * data.docs.len());
        prev = loaded;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rrf_scores_are_bounded(lists in prop::collection::vec(ranked(50, 20), 1..5), kappa in 1.0f64..100.0) {
        let out = rrf_fuse(&lists, kappa, 100);
        prop_assert!(out.is_well_formed());
        let n = lists.len() as f64;
        for h in &out.hits {
            prop_assert!(h.score > 0.0 && h.score <= n / (kappa + 1.0) + 1e-12);
        }
        let union: BTreeSet<_> = candidate_union(&lists).into_iter().collect();
        prop_assert_eq!(out.docs().into_iter().collect::<BTreeSet<_>>(), union);
    }

    #[test]
    fn rrf_depends_only_on_ranks(lists in prop::collection::vec(ranked(50, 20), 1..4), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let warped: Vec<RankedList> = lists
            .iter()
            .map(|l| RankedList {
                path: l.path,
                hits: l.hits.iter().map(|h| ScoredHit::new(h.doc, (a * h.score + b).exp())).collect(),
            })
            .collect();
        prop_assert_eq!(rrf_fuse(&lists, 60.0, 30), rrf_fuse(&warped, 60.0, 30));
    }

    #[test]
    fn ws_minmax_ignores_affine_rescaling(
        lists in prop::collection::vec(ranked(40, 15), 1..4),
        a in 0.1f64..10.0,
        b in -5.0f64..5.0,
        w in prop::collection::vec(0.0f64..1.0, 4),
    ) {
        let weights = &w[..lists.len()];
        prop_assume!(weights.iter().any(|x| *x > 0.0));
        let scaled: Vec<RankedList> = lists
            .iter()
            .map(|l| RankedList {
                path: l.path,
                hits: l.hits.iter().map(|h| ScoredHit::new(h.doc, a * h.score + b)).collect(),
            })
            .collect();
        let x = ws_fuse(&lists, weights, Normalization::Minmax, 100).unwrap();
        let y = ws_fuse(&scaled, weights, Normalization::Minmax, 100).unwrap();
        prop_assert_eq!(x.len(), y.len());
        let xs: std::collections::HashMap<_, _> = x.hits.iter().map(|h| (h.doc, h.score)).collect();
        for h in &y.hits {
            prop_assert!((xs[&h.doc] - h.score).abs() < 1e-9);
        }
    }

    #[test]
    fn fused_lists_are_well_formed(lists in prop::collection::vec(ranked(30, 12), 1..4), k in 1usize..40) {
        let r = rrf_fuse(&lists, 60.0, k);
        let w = ws_fuse(&lists, &vec![1.0; lists.len()], Normalization::None, k).unwrap();
        for out in [r, w] {
            prop_assert!(out.is_well_formed());
            prop_assert!(out.len() <= k);
            prop_assert_eq!(out.path, PathTag::Fused);
        }
    }
}
