use super::{EmbedError, Embedder, EmbeddingVector, MIN_DIM};
use crate::textprep::tokenize;

pub const DEFAULT_HASH_DIM: usize = 256;

const FNV_OFFSET: u64 = 14_695_981_039_346_656_037;
const FNV_PRIME: u64 = 1_099_511_628_211;

const TOKEN_WEIGHT: f64 = 1.0;
const TRIGRAM_WEIGHT: f64 = 0.5;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn add_feature(acc: &mut [f64], feature: &str, weight: f64) {
    let h = fnv1a64(feature.as_bytes());
    let bucket = (h % acc.len() as u64) as usize;
    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
    acc[bucket] += sign * weight;
}

/// Signed feature hashing of tokens (weight 1) and their character
/// trigrams (weight 0.5), L2-normalized. Text without tokens maps to the
/// zero vector.
pub fn hash_embed(text: &str, dim: usize) -> Result<EmbeddingVector, EmbedError> {
    if dim < MIN_DIM {
        return Err(EmbedError::BadDim(dim));
    }
    let mut acc = vec![0.0; dim];
    for token in tokenize(text) {
        add_feature(&mut acc, &token, TOKEN_WEIGHT);
        let chars: Vec<char> = token.chars().collect();
        for gram in chars.windows(3) {
            let gram: String = gram.iter().collect();
            add_feature(&mut acc, &gram, TRIGRAM_WEIGHT);
        }
    }
    Ok(EmbeddingVector::normalized(acc))
}

#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Result<Self, EmbedError> {
        if dim < MIN_DIM {
            return Err(EmbedError::BadDim(dim));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Embedder for HashEmbedder {
    fn name(&self) -> String {
        format!("hash-{}", self.dim)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.iter().map(|t| hash_embed(t, self.dim)).collect()
    }
}
