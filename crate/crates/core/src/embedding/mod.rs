//! Text embeddings, cosine similarity and exact top-k search.

mod hashing;
mod remote;
mod store;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hashing::{HashingEmbedder, DEFAULT_HASHING_DIMENSION};
pub use remote::{RemoteEmbedder, RemoteEmbedderConfig};
pub(crate) use store::rank_order;
pub use store::{top_k, Scored, VectorStore};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("text contains no tokens")]
    NoTokens,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("non-finite component at index {0}")]
    NonFinite(usize),
    #[error("embedding dimension must be positive")]
    EmptyVector,
    #[error("embedding transport failure: {0}")]
    Transport(String),
    #[error("embedding service returned an invalid response: {0}")]
    InvalidResponse(String),
}

impl EmbeddingError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, EmbeddingError::Transport(_))
    }
}

/// A finite, non-empty embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::EmptyVector);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = EmbeddingError;
    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

/// Realizes the embedding function used for every node and query in one graph.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;

    /// Declared output dimension. Remote providers that learn their dimension
    /// from the first response return `None` until then.
    fn dimension(&self) -> Option<usize>;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dimension() != b.dimension() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.dimension(),
            actual: b.dimension(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    // `+ 0.0` turns -0.0 into 0.0 so orthogonal vectors tie under total_cmp.
    Ok((dot / (na * nb)).clamp(-1.0, 1.0) + 0.0)
}
