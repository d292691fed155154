//! Text encoder for questions and verbalized facts.
//!
//! Text is hashed into a sparse bag of token and bigram counts, optionally
//! pooled with the mean of a learnable soft-prompt block, projected to `d`
//! dimensions and L2-normalized. Questions are encoded with the prompt, facts
//! without it.

mod checkpoint;
mod features;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_params, save_params, CheckpointError, CHECKPOINT_VERSION};
pub use features::{featurize, tokenize, SparseFeatures};

pub const DEFAULT_DIM: usize = 64;
pub const DEFAULT_BUCKETS: usize = 4096;
pub const DEFAULT_PROMPT_LEN: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EmbedError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cosine of a zero vector is undefined")]
    ZeroVector,
}

/// Embedding output. `normalized` is false only for degenerate inputs whose
/// projection is exactly zero; those carry an all-zero vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vector {
    values: Vec<f32>,
    normalized: bool,
}

impl Vector {
    pub fn new(values: Vec<f32>) -> Self {
        Vector {
            values,
            normalized: false,
        }
    }

    pub fn normalized(values: Vec<f32>) -> Self {
        Vector {
            values,
            normalized: true,
        }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn is_degenerate(&self) -> bool {
        !self.normalized && self.values.iter().all(|&v| v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }
}

pub fn cosine(u: &Vector, v: &Vector) -> Result<f64, EmbedError> {
    cosine_slices(u.values(), v.values())
}

pub fn cosine_slices(u: &[f32], v: &[f32]) -> Result<f64, EmbedError> {
    if u.len() != v.len() {
        return Err(EmbedError::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let (mut dot, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a as f64, b as f64);
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub dim: usize,
    pub buckets: usize,
    pub prompt_len: usize,
    pub seed: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            dim: DEFAULT_DIM,
            buckets: DEFAULT_BUCKETS,
            prompt_len: DEFAULT_PROMPT_LEN,
            seed: 0,
        }
    }
}

/// Trainable encoder parameters: a `buckets x dim` row-major projection and
/// `prompt_len` soft-prompt vectors of length `buckets`.
///
/// Values are kept f32-representable so a checkpoint round trip is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderParams {
    dim: usize,
    buckets: usize,
    seed: u64,
    projection: Vec<f64>,
    prompt: Vec<Vec<f64>>,
}

impl EmbedderParams {
    /// Projection entries uniform in `±1/sqrt(buckets)`, prompt vectors zero.
    pub fn init(config: EmbedderConfig) -> Self {
        assert!(config.dim > 0 && config.buckets > 0, "dimensions must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let bound = 1.0 / (config.buckets as f64).sqrt();
        let projection = (0..config.buckets * config.dim)
            .map(|_| rng.random_range(-bound..bound) as f32 as f64)
            .collect();
        EmbedderParams {
            dim: config.dim,
            buckets: config.buckets,
            seed: config.seed,
            projection,
            prompt: vec![vec![0.0; config.buckets]; config.prompt_len],
        }
    }

    /// Builds parameters from raw parts, checking every shape.
    pub fn from_parts(
        dim: usize,
        buckets: usize,
        seed: u64,
        projection: Vec<f64>,
        prompt: Vec<Vec<f64>>,
    ) -> Result<Self, EmbedError> {
        let params = EmbedderParams {
            dim,
            buckets,
            seed,
            projection,
            prompt,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.projection.len() != self.buckets * self.dim {
            return Err(EmbedError::DimensionMismatch {
                expected: self.buckets * self.dim,
                found: self.projection.len(),
            });
        }
        if let Some(p) = self.prompt.iter().find(|p| p.len() != self.buckets) {
            return Err(EmbedError::DimensionMismatch {
                expected: self.buckets,
                found: p.len(),
            });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn prompt_len(&self) -> usize {
        self.prompt.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn projection(&self) -> &[f64] {
        &self.projection
    }

    pub fn projection_mut(&mut self) -> &mut [f64] {
        &mut self.projection
    }

    pub fn prompt(&self) -> &[Vec<f64>] {
        &self.prompt
    }

    pub fn prompt_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.prompt
    }

    /// Rounds every parameter to the nearest f32.
    pub fn quantize(&mut self) {
        for v in self.projection.iter_mut().chain(self.prompt.iter_mut().flatten()) {
            *v = *v as f32 as f64;
        }
    }

    pub fn featurize(&self, text: &str) -> SparseFeatures {
        featurize(text, self.buckets, self.seed)
    }

    /// Mean of the prompt vectors (zero for an empty block).
    pub fn prompt_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.buckets];
        if self.prompt.is_empty() {
            return mean;
        }
        let scale = 1.0 / self.prompt.len() as f64;
        for p in &self.prompt {
            for (m, &v) in mean.iter_mut().zip(p) {
                *m += v * scale;
            }
        }
        mean
    }

    /// `W^T x` for a dense bucket vector.
    pub(crate) fn project_dense(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.dim];
        for (row, &w) in self.projection.chunks_exact(self.dim).zip(x) {
            if w != 0.0 {
                for (zj, &r) in z.iter_mut().zip(row) {
                    *zj += w * r;
                }
            }
        }
        z
    }

    /// `W^T x` for sparse features, added into `z`.
    pub(crate) fn project_sparse_into(&self, features: &SparseFeatures, z: &mut [f64]) {
        for &(b, w) in features.entries() {
            let row = &self.projection[b as usize * self.dim..(b as usize + 1) * self.dim];
            for (zj, &r) in z.iter_mut().zip(row) {
                *zj += w * r;
            }
        }
    }

    /// Prompt contribution `W^T mean(P)`, or `None` when the block is empty.
    pub(crate) fn prompt_projection(&self) -> Option<Vec<f64>> {
        if self.prompt.is_empty() {
            return None;
        }
        Some(self.project_dense(&self.prompt_mean()))
    }

    /// Unnormalized projection of `text`.
    pub(crate) fn raw_projection(&self, text: &str, prompt_term: Option<&[f64]>) -> Vec<f64> {
        let mut z = match prompt_term {
            Some(p) => p.to_vec(),
            None => vec![0.0; self.dim],
        };
        self.project_sparse_into(&self.featurize(text), &mut z);
        z
    }

    pub fn embed(&self, text: &str, use_prompt: bool) -> Result<Vector, EmbedError> {
        self.validate()?;
        let prompt_term = if use_prompt { self.prompt_projection() } else { None };
        Ok(normalize(self.raw_projection(text, prompt_term.as_deref())))
    }

    /// Embeds many texts sharing one prompt projection.
    pub fn embed_batch<S: AsRef<str>>(&self, texts: &[S], use_prompt: bool) -> Result<Vec<Vector>, EmbedError> {
        self.validate()?;
        let prompt_term = if use_prompt { self.prompt_projection() } else { None };
        Ok(texts
            .iter()
            .map(|t| normalize(self.raw_projection(t.as_ref(), prompt_term.as_deref())))
            .collect())
    }
}

pub fn embed(text: &str, params: &EmbedderParams, use_prompt: bool) -> Result<Vector, EmbedError> {
    params.embed(text, use_prompt)
}

fn normalize(z: Vec<f64>) -> Vector {
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Vector::new(vec![0.0; z.len()]);
    }
    Vector::normalized(z.iter().map(|v| (v / norm) as f32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> EmbedderParams {
        EmbedderParams::init(EmbedderConfig {
            dim: 16,
            buckets: 256,
            prompt_len: 3,
            seed,
        })
    }

    #[test]
    fn cosine_examples() {
        let v = |a: &[f32]| Vector::new(a.to_vec());
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        assert!((cosine(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(
            cosine(&v(&[1.0]), &v(&[1.0, 0.0])),
            Err(EmbedError::DimensionMismatch { expected: 1, found: 2 })
        );
        assert_eq!(cosine(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])), Err(EmbedError::ZeroVector));
    }

    #[test]
    fn embed_is_deterministic_and_unit_norm() {
        let p = small(1);
        let a = p.embed("A visit B at 2010-05-16", false).unwrap();
        let b = p.embed("A visit B at 2010-05-16", false).unwrap();
        assert_eq!(a, b);
        assert!(a.is_normalized());
        assert!((a.norm() - 1.0).abs() < 1e-6);
        assert_eq!(a.dim(), 16);
    }

    #[test]
    fn zero_projection_is_degenerate() {
        let p = small(2);
        let zero = EmbedderParams::from_parts(16, 256, 2, vec![0.0; 16 * 256], vec![]).unwrap();
        let v = zero.embed("anything at all", true).unwrap();
        assert!(v.is_degenerate());
        assert!(v.values().iter().all(|&x| x == 0.0));
        // empty text without a prompt also projects to zero
        assert!(p.embed("", false).unwrap().is_degenerate());
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(
            EmbedderParams::from_parts(4, 8, 0, vec![0.0; 31], vec![]),
            Err(EmbedError::DimensionMismatch { expected: 32, found: 31 })
        ));
        assert!(EmbedderParams::from_parts(4, 8, 0, vec![0.0; 32], vec![vec![0.0; 7]]).is_err());
    }

    #[test]
    fn zero_prompt_is_a_no_op() {
        let p = small(3);
        let text = "who visited Cambodia after 2009-10-02";
        assert_eq!(p.embed(text, true).unwrap(), p.embed(text, false).unwrap());
    }

    #[test]
    fn nonzero_prompt_changes_question_embedding() {
        for seed in 0..10 {
            let mut p = small(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            for v in p.prompt_mut().iter_mut().flatten() {
                *v = rng.random_range(-0.1..0.1);
            }
            let text = "who visited Cambodia after 2009-10-02";
            assert_ne!(p.embed(text, true).unwrap(), p.embed(text, false).unwrap());
        }
    }

    #[test]
    fn lipschitz_in_projection() {
        let eps = 1e-3;
        for seed in 0..10 {
            let p = small(seed);
            let text = "Foreign Affairs (South Korea) wish to visit Cambodia at 2009-10-06";
            let base = p.embed(text, false).unwrap();
            let mut q = p.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for v in q.projection_mut() {
                *v += rng.random_range(-eps..eps);
            }
            let moved = q.embed(text, false).unwrap();
            let change = base
                .values()
                .iter()
                .zip(moved.values())
                .map(|(a, b)| ((a - b) as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            let feature_norm = p.featurize(text).l2_norm();
            assert!(change < 10.0 * eps * feature_norm, "change {change} too large");
        }
    }
}
