//! Benchmarks and calibration utilities; see `benches/` and `examples/`.
