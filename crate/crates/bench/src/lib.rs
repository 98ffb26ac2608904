//! Criterion benchmarks for the hot paths; run with `cargo bench -p probfuse-bench`.
