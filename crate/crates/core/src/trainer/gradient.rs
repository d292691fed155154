//! Analytic InfoNCE gradient through the hashed encoder.
//!
//! For `z = W^T h`, `e = z / |z|` and `s = e_q . e_c`, the loss gradient is
//! pushed back through the normalization as `dz = (g - e (e . g)) / |z|`
//! and into the projection rows touched by `h`. Question inputs carry the
//! dense prompt mean, whose contribution is accumulated once per batch.

use super::{info_nce, loss::softmax, TrainError, TrainerConfig, TrainingExample};
use crate::embedder::{EmbedderParams, SparseFeatures};
use crate::kg::verbalize;

/// Gradient with the same shape as [`EmbedderParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    pub projection: Vec<f64>,
    pub prompt: Vec<Vec<f64>>,
}

impl ParamGradient {
    fn zeros(params: &EmbedderParams) -> Self {
        ParamGradient {
            projection: vec![0.0; params.projection().len()],
            prompt: vec![vec![0.0; params.buckets()]; params.prompt_len()],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.projection
            .iter()
            .chain(self.prompt.iter().flatten())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

struct Encoded {
    features: SparseFeatures,
    unit: Vec<f64>,
    norm: f64,
}

fn encode(params: &EmbedderParams, text: &str, prompt_term: Option<&[f64]>) -> Encoded {
    let features = params.featurize(text);
    let mut z = match prompt_term {
        Some(p) => p.to_vec(),
        None => vec![0.0; params.dim()],
    };
    params.project_sparse_into(&features, &mut z);
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let unit = if norm > 0.0 {
        z.iter().map(|v| v / norm).collect()
    } else {
        z
    };
    Encoded { features, unit, norm }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient w.r.t. the unnormalized projection given the gradient `g`
/// w.r.t. the unit vector.
fn through_norm(enc: &Encoded, g: &[f64]) -> Vec<f64> {
    if enc.norm == 0.0 {
        return vec![0.0; g.len()];
    }
    let along = dot(&enc.unit, g);
    g.iter()
        .zip(&enc.unit)
        .map(|(gi, ei)| (gi - ei * along) / enc.norm)
        .collect()
}

fn add_sparse_outer(grad: &mut [f64], dim: usize, features: &SparseFeatures, dz: &[f64]) {
    for &(b, w) in features.entries() {
        let row = &mut grad[b as usize * dim..(b as usize + 1) * dim];
        for (r, &d) in row.iter_mut().zip(dz) {
            *r += w * d;
        }
    }
}

/// Candidate texts for example `i`: its positive, its negatives, then the
/// positives of the other examples when in-batch negatives are enabled.
pub(crate) fn candidate_texts(batch: &[TrainingExample], i: usize, in_batch: bool) -> Vec<String> {
    let ex = &batch[i];
    let mut texts = vec![verbalize(&ex.positive)];
    texts.extend(ex.negatives.iter().map(|n| verbalize(&n.fact)));
    if in_batch {
        // Distinct facts only, so repeating examples leaves the loss unchanged.
        let mut seen = vec![&ex.positive];
        for other in batch {
            if !seen.contains(&&other.positive) {
                seen.push(&other.positive);
                texts.push(verbalize(&other.positive));
            }
        }
    }
    texts
}

/// Mean InfoNCE over the batch and its gradient.
pub fn loss_and_gradient(
    params: &EmbedderParams,
    batch: &[TrainingExample],
    config: &TrainerConfig,
) -> Result<(f64, ParamGradient), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::Config("batch must not be empty".into()));
    }
    params.validate()?;
    let dim = params.dim();
    let prompt_mean = params.prompt_mean();
    let prompt_term = params.prompt_projection();
    let tau = config.temperature;
    let scale = 1.0 / batch.len() as f64;

    let mut grad = ParamGradient::zeros(params);
    let mut question_dz_sum = vec![0.0; dim];
    let mut total = 0.0;

    for (i, example) in batch.iter().enumerate() {
        let q = encode(params, &example.question, prompt_term.as_deref());
        let cands: Vec<Encoded> = candidate_texts(batch, i, config.in_batch_negatives)
            .iter()
            .map(|t| encode(params, t, None))
            .collect();
        let sims: Vec<f64> = cands.iter().map(|c| dot(&q.unit, &c.unit)).collect();
        total += info_nce(sims[0], &sims[1..], tau);

        // dL/ds_c = (softmax_c - [c == 0]) / τ, scaled for the batch mean.
        let probs = softmax(sims[0], &sims[1..], tau);
        let mut g_q = vec![0.0; dim];
        for (c, (cand, p)) in cands.iter().zip(&probs).enumerate() {
            let g_s = (p - if c == 0 { 1.0 } else { 0.0 }) / tau * scale;
            if g_s == 0.0 {
                continue;
            }
            for (gq, e) in g_q.iter_mut().zip(&cand.unit) {
                *gq += g_s * e;
            }
            let g_c: Vec<f64> = q.unit.iter().map(|e| g_s * e).collect();
            let dz_c = through_norm(cand, &g_c);
            add_sparse_outer(&mut grad.projection, dim, &cand.features, &dz_c);
        }
        let dz_q = through_norm(&q, &g_q);
        add_sparse_outer(&mut grad.projection, dim, &q.features, &dz_q);
        for (acc, v) in question_dz_sum.iter_mut().zip(&dz_q) {
            *acc += v;
        }
    }

    if params.prompt_len() > 0 {
        // Projection rows see the prompt mean as an extra dense input.
        for (b, &pm) in prompt_mean.iter().enumerate() {
            if pm != 0.0 {
                let row = &mut grad.projection[b * dim..(b + 1) * dim];
                for (r, &d) in row.iter_mut().zip(&question_dz_sum) {
                    *r += pm * d;
                }
            }
        }
        // d mean(P) / d p_k = 1/m for every prompt vector.
        let inv_m = 1.0 / params.prompt_len() as f64;
        let shared: Vec<f64> = params
            .projection()
            .chunks_exact(dim)
            .map(|row| dot(row, &question_dz_sum) * inv_m)
            .collect();
        for p in grad.prompt.iter_mut() {
            p.copy_from_slice(&shared);
        }
    }

    Ok((total * scale, grad))
}

/// Mean loss only.
pub fn batch_loss(
    params: &EmbedderParams,
    batch: &[TrainingExample],
    config: &TrainerConfig,
) -> Result<f64, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::Config("batch must not be empty".into()));
    }
    params.validate()?;
    let prompt_term = params.prompt_projection();
    let mut total = 0.0;
    for (i, example) in batch.iter().enumerate() {
        let q = encode(params, &example.question, prompt_term.as_deref());
        let sims: Vec<f64> = candidate_texts(batch, i, config.in_batch_negatives)
            .iter()
            .map(|t| dot(&q.unit, &encode(params, t, None).unit))
            .collect();
        total += info_nce(sims[0], &sims[1..], config.temperature);
    }
    Ok(total / batch.len() as f64)
}
