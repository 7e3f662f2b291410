use std::sync::{Arc, Condvar, Mutex};
use std::time::Instant;

use super::backend::{ChatBackend, ChatRequest};
use super::ledger::{Stage, UsageLedger, UsageRecord};
use super::parse::ParseError;
use super::prompts::TemplateId;
use super::LlmError;
use crate::retry::RetryPolicy;

pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;

const FORMAT_REMINDER: &str =
    "\n\nYour previous reply did not follow the required output format. Answer again and follow the format exactly.";

/// Counting semaphore bounding concurrent backend calls.
#[derive(Debug)]
struct Limiter {
    cap: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    fn new(cap: usize) -> Self {
        Self {
            cap: cap.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().expect("limiter lock");
        while *n >= self.cap {
            n = self.freed.wait(n).expect("limiter lock");
        }
        *n += 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().expect("limiter lock") -= 1;
        self.0.freed.notify_one();
    }
}

/// The single entry point for model calls: renders templates, retries
/// transport failures, re-asks once on unparseable output and records usage.
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    retry: RetryPolicy,
    ledger: Arc<UsageLedger>,
    limiter: Limiter,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self {
            backend,
            retry: RetryPolicy::default(),
            ledger: Arc::new(UsageLedger::new()),
            limiter: Limiter::new(DEFAULT_MAX_IN_FLIGHT),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, cap: usize) -> Self {
        self.limiter = Limiter::new(cap);
        self
    }

    pub fn with_ledger(mut self, ledger: Arc<UsageLedger>) -> Self {
        self.ledger = ledger;
        self
    }

    pub fn ledger(&self) -> &Arc<UsageLedger> {
        &self.ledger
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    /// Renders `template` with `slots` and returns the raw response text.
    pub fn complete(
        &self,
        stage: Stage,
        template: TemplateId,
        slots: &[(&str, &str)],
    ) -> Result<String, LlmError> {
        let request = ChatRequest::new(template.template().render(slots)?);
        self.call(stage, &request, false)
    }

    /// Like [`Gateway::complete`] but parses the response, re-asking once with a
    /// format reminder when the first reply does not parse.
    pub fn complete_parsed<T>(
        &self,
        stage: Stage,
        template: TemplateId,
        slots: &[(&str, &str)],
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<T, LlmError> {
        let request = ChatRequest::new(template.template().render(slots)?);
        let first = self.call(stage, &request, false)?;
        match parse(&first) {
            Ok(v) => Ok(v),
            Err(_) => {
                let mut again = request.clone();
                again.user.push_str(FORMAT_REMINDER);
                let second = self.call(stage, &again, true)?;
                parse(&second).map_err(|error| LlmError::Parse {
                    template_id: template,
                    error,
                })
            }
        }
    }

    fn call(&self, stage: Stage, request: &ChatRequest, reask: bool) -> Result<String, LlmError> {
        let _permit = self.limiter.acquire();
        let started = Instant::now();
        let outcome = self
            .retry
            .run(|| self.backend.complete(request), LlmError::is_retryable);
        let wall_time_ms = started.elapsed().as_secs_f64() * 1000.0;
        match outcome {
            Ok((response, retry_count)) => {
                self.ledger.record(UsageRecord {
                    template_id: request.template_id,
                    stage,
                    prompt_tokens: response.prompt_tokens,
                    completion_tokens: response.completion_tokens,
                    wall_time_ms,
                    retry_count,
                    reask,
                });
                Ok(response.text)
            }
            Err((e, retries)) if e.is_retryable() => Err(LlmError::RetriesExhausted {
                retries,
                last: e.to_string(),
            }),
            Err((e, _)) => Err(e),
        }
    }
}
