use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use super::backend::{ChatBackend, ChatMessage, ChatRequest, Purpose, TranscriptLog, TranscriptRecord};
use crate::error::{LiloError, Result};

/// One logical call: a rendered prompt plus sampling parameters.
#[derive(Clone, Debug)]
pub struct CallSpec {
    pub purpose: Purpose,
    pub trial: usize,
    pub prompt: String,
    pub temperature: f64,
    pub seed: u64,
    pub vars: BTreeMap<String, String>,
}

/// Backend plus retry policy, transcript logging and a completion cache
/// keyed by request hash.
pub struct LlmClient {
    backend: Arc<dyn ChatBackend>,
    transcript: Arc<TranscriptLog>,
    pub retry_budget: usize,
    pub max_tokens: u32,
    cache: Mutex<HashMap<String, String>>,
}

impl LlmClient {
    pub fn new(backend: Arc<dyn ChatBackend>, transcript: Arc<TranscriptLog>) -> Self {
        Self { backend, transcript, retry_budget: 2, max_tokens: 4096, cache: Mutex::new(HashMap::new()) }
    }

    pub fn with_retry_budget(mut self, n: usize) -> Self {
        self.retry_budget = n;
        self
    }

    pub fn transcript(&self) -> &Arc<TranscriptLog> {
        &self.transcript
    }

    pub fn backend_name(&self) -> String {
        self.backend.name()
    }

    fn request(&self, spec: &CallSpec, attempt: usize) -> ChatRequest {
        ChatRequest {
            purpose: spec.purpose,
            trial: spec.trial,
            messages: vec![ChatMessage::user(spec.prompt.clone())],
            temperature: spec.temperature,
            max_tokens: self.max_tokens,
            seed: Some(spec.seed.wrapping_add(attempt as u64)),
            vars: spec.vars.clone(),
        }
    }

    /// Calls the backend until `parse` succeeds or the retry budget is
    /// spent. A completion that parsed before for an identical request is
    /// reused without calling the backend.
    pub fn call<T>(&self, spec: &CallSpec, parse: impl Fn(&str) -> std::result::Result<T, String>) -> Result<T> {
        let first_hash = self.request(spec, 0).hash();
        if let Some(text) = self.cache.lock().expect("cache poisoned").get(&first_hash).cloned() {
            if let Ok(v) = parse(&text) {
                return Ok(v);
            }
        }
        let mut raw = Vec::new();
        let mut last_err = String::new();
        let mut backend_err = None;
        for attempt in 0..=self.retry_budget {
            let req = self.request(spec, attempt);
            let started = Instant::now();
            let resp = match self.backend.complete(&req) {
                Ok(r) => r,
                Err(e) => {
                    tracing::warn!(purpose = spec.purpose.as_str(), attempt, "backend call failed: {e}");
                    backend_err = Some(e);
                    continue;
                }
            };
            let latency_ms = started.elapsed().as_millis() as u64;
            let parsed = parse(&resp.text);
            let parse_status = match &parsed {
                Ok(_) => "ok".to_string(),
                Err(e) => format!("error: {e}"),
            };
            self.transcript.append(TranscriptRecord {
                trial: spec.trial,
                purpose: spec.purpose,
                request_hash: req.hash(),
                prompt: spec.prompt.clone(),
                completion: resp.text.clone(),
                latency_ms,
                parse_status,
            })?;
            match parsed {
                Ok(v) => {
                    self.cache.lock().expect("cache poisoned").insert(first_hash, resp.text);
                    return Ok(v);
                }
                Err(e) => {
                    tracing::warn!(purpose = spec.purpose.as_str(), attempt, "unparseable completion: {e}");
                    last_err = e;
                    raw.push(resp.text);
                }
            }
        }
        if raw.is_empty() {
            if let Some(e) = backend_err {
                return Err(e);
            }
        }
        Err(LiloError::Parse {
            purpose: spec.purpose.as_str().to_string(),
            message: format!("{} attempts failed; last: {last_err}", self.retry_budget + 1),
            transcripts: raw,
        })
    }
}
