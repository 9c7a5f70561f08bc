//! Benchmark-only crate; no library code.
