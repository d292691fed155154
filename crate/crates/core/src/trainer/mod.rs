//! Contrastive fine-tuning of the encoder.
//!
//! Each training question is paired with its gold fact and three corrupted
//! hard negatives (wrong time, wrong relation, wrong object and time), plus
//! optionally the other positives of its batch. Parameters are updated by
//! plain gradient descent on the mean InfoNCE loss.

mod gradient;
mod loss;
mod negatives;

use std::io::{BufRead, BufReader, Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedder::{cosine, EmbedError, EmbedderConfig, EmbedderParams};
use crate::kg::{FactId, TemporalKG};

pub use gradient::{batch_loss, loss_and_gradient, ParamGradient};
pub use loss::info_nce;
pub use negatives::{generate_negatives, CorruptionKind, Negative, TrainingExample};

pub const DEFAULT_TEMPERATURE: f64 = 0.01;
pub const DEFAULT_EPOCHS: usize = 2;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;
pub const DEFAULT_BATCH_SIZE: usize = 16;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("corpus too small for negative sampling: {timestamps} time values, {predicates} predicates, {entities} entities")]
    CorpusTooSmall {
        timestamps: usize,
        predicates: usize,
        entities: usize,
    },
    #[error("no {kind:?} negative absent from the graph found for fact {fact}")]
    NegativeExhausted { fact: FactId, kind: CorruptionKind },
    #[error("invalid trainer configuration: {0}")]
    Config(String),
    #[error("training pair references unknown fact {0}")]
    UnknownFact(FactId),
    #[error("training pairs line {line}: {message}")]
    BadPair { line: usize, message: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub temperature: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub rng_seed: u64,
    pub in_batch_negatives: bool,
    pub embedder: EmbedderConfig,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            temperature: DEFAULT_TEMPERATURE,
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            rng_seed: 0,
            in_batch_negatives: true,
            embedder: EmbedderConfig::default(),
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(TrainError::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be at least 1".into()));
        }
        if self.embedder.dim == 0 || self.embedder.buckets == 0 {
            return Err(TrainError::Config("embedder dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// A question and the id of the fact that answers it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub question: String,
    pub fact_id: FactId,
}

/// Reads JSON lines `{"question": ..., "fact_id": ...}`.
pub fn read_training_pairs<R: Read>(source: R) -> Result<Vec<TrainingPair>, TrainError> {
    let mut pairs = Vec::new();
    for (idx, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: TrainingPair = serde_json::from_str(&line).map_err(|e| TrainError::BadPair {
            line: idx + 1,
            message: e.to_string(),
        })?;
        pairs.push(pair);
    }
    Ok(pairs)
}

pub fn write_training_pairs<W: Write>(pairs: &[TrainingPair], mut sink: W) -> std::io::Result<()> {
    for p in pairs {
        serde_json::to_writer(&mut sink, p)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub params: EmbedderParams,
    /// Mean loss over the whole training set after each epoch.
    pub epoch_losses: Vec<f64>,
    /// Dataset loss at initialization and after the last epoch.
    pub initial_loss: f64,
    pub final_loss: f64,
    pub examples: Vec<TrainingExample>,
}

/// Writes `epoch,mean_loss` rows, epochs counted from 1.
pub fn write_loss_log<W: Write>(epoch_losses: &[f64], mut sink: W) -> std::io::Result<()> {
    writeln!(sink, "epoch,mean_loss")?;
    for (i, loss) in epoch_losses.iter().enumerate() {
        writeln!(sink, "{},{}", i + 1, loss)?;
    }
    Ok(())
}

/// Attaches three hard negatives to every pair, drawing from `rng_seed`.
pub fn build_examples(
    kg: &TemporalKG,
    pairs: &[TrainingPair],
    rng_seed: u64,
) -> Result<Vec<TrainingExample>, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    pairs
        .iter()
        .map(|pair| {
            let positive = kg.fact(pair.fact_id).ok_or(TrainError::UnknownFact(pair.fact_id))?.clone();
            let negatives = generate_negatives(&positive, kg, &mut rng)?;
            Ok(TrainingExample {
                question: pair.question.clone(),
                positive,
                negatives,
            })
        })
        .collect()
}

/// Mean of cosine(q, positive) − cosine(q, negative) over examples, for the
/// negatives of the given kind.
pub fn mean_margin(params: &EmbedderParams, examples: &[TrainingExample], kind: CorruptionKind) -> Result<f64, TrainError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for ex in examples {
        let q = params.embed(&ex.question, true)?;
        let pos = params.embed(&crate::kg::verbalize(&ex.positive), false)?;
        for neg in ex.negatives.iter().filter(|n| n.kind == kind) {
            let n = params.embed(&crate::kg::verbalize(&neg.fact), false)?;
            total += cosine(&q, &pos)? - cosine(&q, &n)?;
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

fn dataset_loss(params: &EmbedderParams, examples: &[TrainingExample], config: &TrainerConfig) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for chunk in examples.chunks(config.batch_size) {
        total += batch_loss(params, chunk, config)? * chunk.len() as f64;
    }
    Ok(total / examples.len() as f64)
}

fn apply(params: &mut EmbedderParams, grad: &ParamGradient, lr: f64) {
    for (w, g) in params.projection_mut().iter_mut().zip(&grad.projection) {
        *w -= lr * g;
    }
    for (p, g) in params.prompt_mut().iter_mut().zip(&grad.prompt) {
        for (w, gv) in p.iter_mut().zip(g) {
            *w -= lr * gv;
        }
    }
}

/// Trains encoder parameters from their seeded initialization.
pub fn train(kg: &TemporalKG, pairs: &[TrainingPair], config: &TrainerConfig) -> Result<TrainingOutcome, TrainError> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(TrainError::Config("no training pairs".into()));
    }
    let examples = build_examples(kg, pairs, config.rng_seed)?;
    let mut params = EmbedderParams::init(config.embedder);
    let initial_loss = dataset_loss(&params, &examples, config)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<TrainingExample> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let (_, grad) = loss_and_gradient(&params, &batch, config)?;
            apply(&mut params, &grad, config.learning_rate);
        }
        let mean = dataset_loss(&params, &examples, config)?;
        log::info!("epoch {} mean loss {:.6}", epoch + 1, mean);
        epoch_losses.push(mean);
    }
    params.quantize();
    let final_loss = dataset_loss(&params, &examples, config)?;
    if final_loss > initial_loss {
        log::warn!("training loss rose from {initial_loss} to {final_loss}");
    }
    Ok(TrainingOutcome {
        params,
        epoch_losses,
        initial_loss,
        final_loss,
        examples,
    })
}
