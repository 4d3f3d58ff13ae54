//! Criterion benchmarks for the trapped-pressure kernels; see `benches/`.
