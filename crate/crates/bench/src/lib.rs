//! Benchmark-only crate; see `benches/simulator.rs` for the harness.
