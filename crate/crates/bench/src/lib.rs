//! Criterion benchmarks for the metric engine, scores and the segmenter.
//! Run with `cargo bench -p oodseg-bench`.
