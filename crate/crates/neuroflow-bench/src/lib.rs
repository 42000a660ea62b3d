//! Benchmark-only crate; see `benches/flow_paths.rs`.
