//! Criterion benchmarks for kernel construction, loss tables and minimization; see `benches/`.
