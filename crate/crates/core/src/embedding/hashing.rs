use super::{EmbeddingError, EmbeddingProvider, EmbeddingVector};

pub const DEFAULT_HASHING_DIMENSION: usize = 256;

/// Deterministic bag-of-tokens embedder.
///
/// Text is lowercased and split on every non-alphanumeric character; each token
/// is hashed (FNV-1a, 64 bit) into one of `dimension` buckets and the count
/// vector is L2-normalized.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dimension: usize,
    name: String,
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        Self {
            dimension,
            name: format!("hashing-{dimension}"),
        }
    }

    pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
    }

    fn bucket(&self, token: &str) -> usize {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let hash = token
            .bytes()
            .fold(OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(PRIME));
        (hash % self.dimension as u64) as usize
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_HASHING_DIMENSION)
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.dimension)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        if text.trim().is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        let mut counts = vec![0.0f64; self.dimension];
        let mut any = false;
        for token in Self::tokens(text) {
            counts[self.bucket(&token)] += 1.0;
            any = true;
        }
        if !any {
            return Err(EmbeddingError::NoTokens);
        }
        let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
        counts.iter_mut().for_each(|c| *c /= norm);
        EmbeddingVector::new(counts)
    }
}
