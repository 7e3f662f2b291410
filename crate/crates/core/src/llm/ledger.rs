use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::prompts::TemplateId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Build,
    Researcher,
    Auditor,
    Adjudicator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub template_id: TemplateId,
    pub stage: Stage,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub wall_time_ms: f64,
    pub retry_count: u32,
    /// Whether this call was the format re-ask after a parse failure.
    pub reask: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageTotals {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub retries: u64,
    pub wall_time_ms: f64,
}

impl UsageTotals {
    fn add(&mut self, r: &UsageRecord) {
        self.calls += 1;
        self.prompt_tokens += r.prompt_tokens;
        self.completion_tokens += r.completion_tokens;
        self.retries += u64::from(r.retry_count);
        self.wall_time_ms += r.wall_time_ms;
    }

    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

/// Token counts only; wall time is left out so the value is reproducible.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenTotals {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl From<UsageTotals> for TokenTotals {
    fn from(t: UsageTotals) -> Self {
        Self {
            calls: t.calls,
            prompt_tokens: t.prompt_tokens,
            completion_tokens: t.completion_tokens,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageSummary {
    pub total: UsageTotals,
    pub by_template: BTreeMap<TemplateId, UsageTotals>,
    pub by_stage: BTreeMap<Stage, UsageTotals>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSummary {
    pub total: TokenTotals,
    pub by_template: BTreeMap<TemplateId, TokenTotals>,
    pub by_stage: BTreeMap<Stage, TokenTotals>,
}

impl From<&UsageSummary> for TokenSummary {
    fn from(s: &UsageSummary) -> Self {
        Self {
            total: s.total.into(),
            by_template: s
                .by_template
                .iter()
                .map(|(k, v)| (*k, (*v).into()))
                .collect(),
            by_stage: s.by_stage.iter().map(|(k, v)| (*k, (*v).into())).collect(),
        }
    }
}

/// Append-only call log, safe to share between threads.
#[derive(Debug, Default)]
pub struct UsageLedger {
    records: Mutex<Vec<UsageRecord>>,
}

impl UsageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, r: UsageRecord) {
        self.records.lock().expect("ledger lock").push(r);
    }

    pub fn records(&self) -> Vec<UsageRecord> {
        self.records.lock().expect("ledger lock").clone()
    }

    pub fn len(&self) -> usize {
        self.records.lock().expect("ledger lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn summary(&self) -> UsageSummary {
        summarize(&self.records())
    }
}

pub fn summarize(records: &[UsageRecord]) -> UsageSummary {
    let mut s = UsageSummary::default();
    for r in records {
        s.total.add(r);
        s.by_template.entry(r.template_id).or_default().add(r);
        s.by_stage.entry(r.stage).or_default().add(r);
    }
    s
}
