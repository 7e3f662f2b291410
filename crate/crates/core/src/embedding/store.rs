use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{cosine_similarity, EmbeddingError, EmbeddingVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub id: String,
    pub score: f64,
}

/// Immutable id-keyed vector collection with a single shared dimension.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VectorStore {
    dimension: Option<usize>,
    ids: Vec<String>,
    vectors: Vec<EmbeddingVector>,
}

impl VectorStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a store, rejecting zero vectors and mixed dimensions.
    pub fn from_entries<I, S>(entries: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (S, EmbeddingVector)>,
        S: Into<String>,
    {
        let mut store = Self::new();
        for (id, v) in entries {
            store.insert(id, v)?;
        }
        Ok(store)
    }

    pub fn insert(
        &mut self,
        id: impl Into<String>,
        v: EmbeddingVector,
    ) -> Result<(), EmbeddingError> {
        match self.dimension {
            Some(d) if d != v.dimension() => {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: d,
                    actual: v.dimension(),
                })
            }
            _ => self.dimension = Some(v.dimension()),
        }
        if v.is_zero() {
            return Err(EmbeddingError::ZeroVector);
        }
        self.ids.push(id.into());
        self.vectors.push(v);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector> {
        self.ids
            .iter()
            .position(|i| i == id)
            .map(|p| &self.vectors[p])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &EmbeddingVector)> {
        self.ids.iter().map(String::as_str).zip(&self.vectors)
    }

    /// Every entry scored against `query`, best first.
    pub fn ranked(&self, query: &EmbeddingVector) -> Result<Vec<Scored>, EmbeddingError> {
        self.ranked_filtered(query, |_| true)
    }

    pub fn ranked_filtered(
        &self,
        query: &EmbeddingVector,
        keep: impl Fn(&str) -> bool,
    ) -> Result<Vec<Scored>, EmbeddingError> {
        let mut scored = Vec::with_capacity(self.len());
        for (id, v) in self.iter() {
            if keep(id) {
                scored.push(Scored {
                    id: id.to_owned(),
                    score: cosine_similarity(query, v)?,
                });
            }
        }
        scored.sort_by(rank_order);
        Ok(scored)
    }
}

/// Descending score, ascending id on ties.
pub(crate) fn rank_order(a: &Scored, b: &Scored) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

/// Exact top-k by cosine similarity; returns `min(k, |store|)` entries.
pub fn top_k(
    query: &EmbeddingVector,
    store: &VectorStore,
    k: usize,
) -> Result<Vec<Scored>, EmbeddingError> {
    let mut ranked = store.ranked(query)?;
    ranked.truncate(k);
    Ok(ranked)
}
