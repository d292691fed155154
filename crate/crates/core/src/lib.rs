//! Temporal knowledge-graph question answering.

pub mod embedder;
pub mod kg;
pub mod trainer;
pub mod synthetic;
pub mod store;
pub mod rerank;
pub mod gateway;
pub mod plan;
pub mod evaluation;
