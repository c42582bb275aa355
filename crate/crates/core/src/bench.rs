//! Welfare benchmarks.
