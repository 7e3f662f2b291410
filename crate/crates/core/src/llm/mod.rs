//! LLM access: backends, prompt templates, response parsers, retries and usage accounting.

pub mod backend;
pub mod gateway;
pub mod http;
pub mod ledger;
pub mod parse;
pub mod prompts;

use thiserror::Error;

pub use backend::{
    fingerprint, ChatBackend, ChatRequest, ChatResponse, FnBackend, RecordingBackend, Script,
    ScriptEntry, ScriptedBackend,
};
pub use gateway::Gateway;
pub use http::{HttpBackendConfig, HttpChatBackend};
pub use ledger::{Stage, TokenSummary, UsageLedger, UsageRecord, UsageSummary};
pub use parse::{KeywordFeatures, ParseError, SentencingOutput};
pub use prompts::{PromptTemplate, RenderedPrompt, TemplateError, TemplateId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("no scripted response for {template_id} prompt with fingerprint {fingerprint}")]
    UnknownFingerprint {
        template_id: TemplateId,
        fingerprint: String,
    },
    #[error("script file: {0}")]
    Script(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("{template_id} response unparseable after re-ask: {error}")]
    Parse {
        template_id: TemplateId,
        error: ParseError,
    },
    #[error("gave up after {retries} retries: {last}")]
    RetriesExhausted { retries: u32, last: String },
}

impl LlmError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, LlmError::Transport(_))
    }

    /// Failures of a single exchange that callers may degrade around. Script
    /// mismatches and template bugs are never soft.
    pub fn is_soft(&self) -> bool {
        matches!(
            self,
            LlmError::Transport(_)
                | LlmError::Backend(_)
                | LlmError::Parse { .. }
                | LlmError::RetriesExhausted { .. }
        )
    }
}
