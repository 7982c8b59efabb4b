//! Tensor path: per-token embeddings scored by late-interaction MaxSim.

mod emvb;
pub mod kmeans;
mod store;

use crate::error::{Error, Result};
use crate::model::{dot_f64, DocOrdinal, PathTag, RankedList, TokenTensor, TopK};

pub use emvb::{
    default_centroids, EmvbIndex, EmvbParams, EmvbSearchParams, EmvbStats, EMVB_MAGIC,
    KMEANS_ITERS,
};
pub use store::{offsets_path, TensorStore};

/// Sum over query tokens of the best inner product against any document token.
pub fn maxsim(q: &TokenTensor, d: &TokenTensor) -> Result<f64> {
    if q.dim() != d.dim() {
        return Err(Error::DimMismatch {
            expected: q.dim(),
            found: d.dim(),
        });
    }
    Ok(q.rows()
        .map(|qi| {
            d.rows()
                .map(|dj| dot_f64(qi, dj))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum())
}

/// Exact MaxSim top-k over every document in the store.
pub fn tens_topk_bruteforce(store: &TensorStore, q: &TokenTensor, k: usize) -> Result<RankedList> {
    let mut top = TopK::new(k);
    for i in 0..store.len() {
        let doc = DocOrdinal(i as u32);
        top.push(doc, maxsim(q, &store.get(doc)?)?);
    }
    Ok(top.into_ranked(PathTag::Tens))
}
