use std::sync::OnceLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingProvider, EmbeddingVector};
use crate::retry::RetryPolicy;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteEmbedderConfig {
    /// Full URL of an OpenAI-compatible `/embeddings` endpoint.
    pub endpoint: String,
    pub model: String,
    /// Expected dimension. When absent the first response fixes it.
    pub dimension: Option<usize>,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

/// HTTP embedder speaking the OpenAI embedding wire shape:
/// `POST {model, input: [texts]}` → `{data: [{embedding: [...]}]}`.
pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    learned_dimension: OnceLock<usize>,
    name: String,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteEmbedderConfig, api_key: Option<String>) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build();
        let name = format!("remote:{}", config.model);
        let learned_dimension = OnceLock::new();
        if let Some(d) = config.dimension {
            let _ = learned_dimension.set(d);
        }
        Self {
            config,
            api_key,
            agent,
            learned_dimension,
            name,
        }
    }

    fn post(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let mut request = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            request = request.set("Authorization", &format!("Bearer {key}"));
        }
        let body = EmbeddingRequest {
            model: &self.config.model,
            input: texts,
        };
        let response = match request.send_json(&body) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) if code >= 500 || code == 429 => {
                let text = r.into_string().unwrap_or_default();
                return Err(EmbeddingError::Transport(format!("status {code}: {text}")));
            }
            Err(ureq::Error::Status(code, r)) => {
                let text = r.into_string().unwrap_or_default();
                return Err(EmbeddingError::InvalidResponse(format!(
                    "status {code}: {text}"
                )));
            }
            Err(e) => return Err(EmbeddingError::Transport(e.to_string())),
        };
        let mut parsed: EmbeddingResponse = response
            .into_json()
            .map_err(|e| EmbeddingError::InvalidResponse(e.to_string()))?;
        if parsed.data.len() != texts.len() {
            return Err(EmbeddingError::InvalidResponse(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                parsed.data.len()
            )));
        }
        if parsed.data.iter().all(|d| d.index.is_some()) {
            parsed.data.sort_by_key(|d| d.index);
        }
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }

    fn check_dimension(&self, v: &[f64]) -> Result<(), EmbeddingError> {
        let expected = *self.learned_dimension.get_or_init(|| v.len());
        if v.len() != expected {
            return Err(EmbeddingError::DimensionMismatch {
                expected,
                actual: v.len(),
            });
        }
        Ok(())
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> Option<usize> {
        self.learned_dimension.get().copied()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        Ok(self.embed_batch(&[text])?.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(EmbeddingError::EmptyText);
        }
        let (raw, _) = self
            .config
            .retry
            .run(|| self.post(texts), EmbeddingError::is_retryable)
            .map_err(|(e, _)| e)?;
        raw.into_iter()
            .map(|v| {
                self.check_dimension(&v)?;
                EmbeddingVector::new(v)
            })
            .collect()
    }
}
