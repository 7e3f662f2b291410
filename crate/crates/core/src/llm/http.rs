use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::backend::{estimate_tokens, ChatBackend, ChatRequest, ChatResponse};
use super::LlmError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    /// Full URL of an OpenAI-compatible `/chat/completions` endpoint.
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: u64,
}

/// OpenAI-compatible chat-completion client. Retries live in the gateway so
/// that they are counted in the usage ledger.
pub struct HttpChatBackend {
    config: HttpBackendConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    name: String,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl HttpChatBackend {
    pub fn new(config: HttpBackendConfig, api_key: Option<String>) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build();
        let name = format!("http:{}", config.model);
        Self {
            config,
            api_key,
            agent,
            name,
        }
    }
}

impl ChatBackend for HttpChatBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let mut call = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        let body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
        });
        let response = match call.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) => {
                let text = r.into_string().unwrap_or_default();
                return Err(if code >= 500 || code == 429 {
                    LlmError::Transport(format!("status {code}: {text}"))
                } else {
                    LlmError::Backend(format!("status {code}: {text}"))
                });
            }
            Err(e) => return Err(LlmError::Transport(e.to_string())),
        };
        let parsed: CompletionResponse = response
            .into_json()
            .map_err(|e| LlmError::Backend(format!("unreadable completion: {e}")))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Backend("completion has no message content".into()))?;
        let (prompt_tokens, completion_tokens) = match parsed.usage {
            Some(u) => (u.prompt_tokens, u.completion_tokens),
            None => (
                estimate_tokens(&request.system) + estimate_tokens(&request.user),
                estimate_tokens(&text),
            ),
        };
        Ok(ChatResponse {
            text,
            prompt_tokens,
            completion_tokens,
        })
    }
}
