//! Parameter checkpoints.
//!
//! Layout (little-endian): magic `TKGE`, `version: u32`, `d: u32`,
//! `d_tok: u32`, `m: u32`, `seed: u64`, then the `d_tok x d` projection in
//! row-major order and the `m` prompt vectors, all as `f32`.

use std::io::{Read, Write};

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::EmbedderParams;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"TKGE";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a parameter checkpoint")]
    BadMagic,
    #[error("checkpoint format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint contains a non-finite value")]
    NonFinite,
}

pub fn save_params<W: Write>(params: &EmbedderParams, mut sink: W) -> Result<(), CheckpointError> {
    sink.write_all(&encode(params))?;
    Ok(())
}

pub fn load_params<R: Read>(mut source: R) -> Result<EmbedderParams, CheckpointError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    decode(&bytes)
}

fn encode(params: &EmbedderParams) -> Vec<u8> {
    let n = params.projection.len() + params.prompt.len() * params.buckets;
    let mut out = Vec::with_capacity(28 + 4 * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.dim as u32).to_le_bytes());
    out.extend_from_slice(&(params.buckets as u32).to_le_bytes());
    out.extend_from_slice(&(params.prompt.len() as u32).to_le_bytes());
    out.extend_from_slice(&params.seed.to_le_bytes());
    for &v in params.projection.iter().chain(params.prompt.iter().flatten()) {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn decode(bytes: &[u8]) -> Result<EmbedderParams, CheckpointError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < 28 {
        return Err(CheckpointError::Truncated);
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let (dim, buckets, m) = (u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize);
    let seed = u64::from_le_bytes(bytes[20..28].try_into().unwrap());
    let count = buckets
        .checked_mul(dim)
        .and_then(|p| m.checked_mul(buckets).and_then(|q| p.checked_add(q)))
        .ok_or(CheckpointError::Truncated)?;
    let body = &bytes[28..];
    if body.len() != count * 4 {
        return Err(CheckpointError::Truncated);
    }
    let mut values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    if body.chunks_exact(4).any(|c| !f32::from_le_bytes(c.try_into().unwrap()).is_finite()) {
        return Err(CheckpointError::NonFinite);
    }
    let projection: Vec<f64> = values.by_ref().take(buckets * dim).collect();
    let prompt = (0..m).map(|_| values.by_ref().take(buckets).collect()).collect();
    Ok(EmbedderParams {
        dim,
        buckets,
        seed,
        projection,
        prompt,
    })
}

impl EmbedderParams {
    /// SHA-256 of the checkpoint encoding.
    pub fn fingerprint(&self) -> [u8; 32] {
        Sha256::digest(encode(self)).into()
    }
}
