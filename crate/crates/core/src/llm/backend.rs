use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::prompts::{RenderedPrompt, TemplateId};
use super::LlmError;

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub template_id: TemplateId,
    pub system: String,
    pub user: String,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn new(prompt: RenderedPrompt) -> Self {
        Self {
            template_id: prompt.template_id,
            system: prompt.system,
            user: prompt.user,
            temperature: 0.0,
        }
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(self.template_id, &self.system, &self.user)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

/// SHA-256 over the template id and the whitespace-normalized prompt text.
pub fn fingerprint(template_id: TemplateId, system: &str, user: &str) -> String {
    let normalize = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut h = Sha256::new();
    h.update(template_id.as_str().as_bytes());
    h.update([0u8]);
    h.update(normalize(system).as_bytes());
    h.update([0u8]);
    h.update(normalize(user).as_bytes());
    hex::encode(h.finalize())
}

/// Rough token count used when a backend does not report usage.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub template_id: TemplateId,
    pub response: String,
}

/// Recorded fingerprint → response map, serialized as pretty JSON.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    pub entries: BTreeMap<String, ScriptEntry>,
}

impl Script {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Script(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| LlmError::Script(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("script serializes");
        s.push('\n');
        s
    }

    pub fn insert(&mut self, request: &ChatRequest, response: &str) {
        self.entries.insert(
            request.fingerprint(),
            ScriptEntry {
                template_id: request.template_id,
                response: response.to_owned(),
            },
        );
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Replays a [`Script`]; any unrecorded prompt is a hard error.
pub struct ScriptedBackend {
    script: Script,
}

impl ScriptedBackend {
    pub fn new(script: Script) -> Self {
        Self { script }
    }

    pub fn script(&self) -> &Script {
        &self.script
    }
}

impl ChatBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let fp = request.fingerprint();
        let entry = self
            .script
            .entries
            .get(&fp)
            .ok_or_else(|| LlmError::UnknownFingerprint {
                template_id: request.template_id,
                fingerprint: fp.clone(),
            })?;
        Ok(ChatResponse {
            prompt_tokens: estimate_tokens(&request.system) + estimate_tokens(&request.user),
            completion_tokens: estimate_tokens(&entry.response),
            text: entry.response.clone(),
        })
    }
}

/// Backend answered by a closure; handy for tests and fixture generation.
pub struct FnBackend<F> {
    name: String,
    respond: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync,
{
    pub fn new(name: impl Into<String>, respond: F) -> Self {
        Self {
            name: name.into(),
            respond,
        }
    }
}

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let text = (self.respond)(request)?;
        Ok(ChatResponse {
            prompt_tokens: estimate_tokens(&request.system) + estimate_tokens(&request.user),
            completion_tokens: estimate_tokens(&text),
            text,
        })
    }
}

/// Forwards to an inner backend and records every successful exchange.
pub struct RecordingBackend<B> {
    inner: B,
    script: Mutex<Script>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            script: Mutex::new(Script::default()),
        }
    }

    pub fn script(&self) -> Script {
        self.script.lock().expect("script lock").clone()
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let response = self.inner.complete(request)?;
        self.script
            .lock()
            .expect("script lock")
            .insert(request, &response.text);
        Ok(response)
    }
}
