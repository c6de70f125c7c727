//! Criterion benchmarks for the shearlab kernels; see `benches/kernels.rs`.
