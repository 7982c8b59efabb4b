//! Hybrid retrieval over four paradigms (full-text, learned sparse, dense and
//! late-interaction tensor) with concurrent path execution, rank fusion and a
//! deterministic benchmark harness.

mod binio;
pub mod bench;
pub mod dvs;
pub mod engine;
pub mod error;
pub mod fts;
pub mod fusion;
pub mod model;
pub mod svs;
pub mod tens;

pub use error::{Error, Result};
pub use model::{
    CorpusManifest, DenseVector, DocOrdinal, PathTag, RankedList, ScoredHit, SparseVector,
    TokenTensor,
};
