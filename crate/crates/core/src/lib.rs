//! Benchmark harness for judging refactoring correctness with foundation
//! models: corpus handling, prompting, verdict parsing, differential Java
//! execution, metamorphic variants, metrics and statistics.

pub mod dataset;
pub mod executor;
pub mod metamorph;
pub mod prompting;
pub mod verdict;
pub mod analytics;
pub mod assessor;
pub mod model_client;
pub mod stats;
pub mod pipeline;
