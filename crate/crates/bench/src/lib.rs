//! Fixtures shared by the benchmarks.

use tkgqa_core::embedder::{EmbedderConfig, EmbedderParams};
use tkgqa_core::store::{build_store, TemporalKnowledgeStore};
use tkgqa_core::synthetic::contrastive_corpus;
use tkgqa_core::trainer::{build_examples, TrainingExample};

pub struct Fixture {
    pub params: EmbedderParams,
    pub store: TemporalKnowledgeStore,
    pub examples: Vec<TrainingExample>,
}

pub fn fixture(facts: usize) -> Fixture {
    let (kg, pairs) = contrastive_corpus(0, facts, 64);
    let params = EmbedderParams::init(EmbedderConfig::default());
    let store = build_store(&kg, &params).expect("corpus is non-empty");
    let examples = build_examples(&kg, &pairs, 0).expect("corpus is large enough");
    Fixture { params, store, examples }
}
