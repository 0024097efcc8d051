//! Criterion benchmarks for `dualaoi-core`; see `benches/aoi.rs`.
