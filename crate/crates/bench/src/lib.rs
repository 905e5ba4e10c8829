//! Criterion benchmarks for the surrogate and calibration hot paths live in `benches/`.
