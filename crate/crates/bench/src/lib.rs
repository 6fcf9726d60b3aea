//! Criterion benchmarks for the granular gas toolkit live in `benches/`.
