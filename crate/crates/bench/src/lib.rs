//! Benchmark-only package; the kernels live in `benches/`.
