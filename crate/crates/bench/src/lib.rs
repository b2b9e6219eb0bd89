//! Benchmarks for the `hltomo` crate live in `benches/`.
