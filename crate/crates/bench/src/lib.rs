//! Criterion benchmark suite; see `benches/`.
