//! Criterion benchmarks for the scoring, feature and training stages; see `benches/`.
