//! Agents for new sessions.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use lilo_core::language::{
    Agent, AgentConfig, ChatBackend, ChatRequest, ChatResponse, HttpBackend, HttpConfig, LlmAgent, LlmClient,
    OracleAgent, ReplayBackend, ScriptedBackend, TranscriptLog, TranscriptRecord,
};
use lilo_core::{Environment, LiloError, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AgentSpec {
    /// `"oracle"`, `"synthetic"` or `"scripted:<path>"`
    Named(String),
    Http(HttpConfig),
}

impl Default for AgentSpec {
    fn default() -> Self {
        Self::Named("oracle".into())
    }
}

impl AgentSpec {
    pub fn parse(s: &str) -> Self {
        Self::Named(s.to_string())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Named(s) if s == "oracle" || s == "synthetic" => Ok(()),
            Self::Named(s) if s.strip_prefix("scripted:").is_some_and(|p| !p.is_empty()) => Ok(()),
            Self::Named(s) => Err(LiloError::config(format!("unknown backend {s:?}"))),
            Self::Http(h) => HttpBackend::new(h.clone()).map(|_| ()),
        }
    }

    fn chat(&self) -> Result<Option<Arc<dyn ChatBackend>>> {
        Ok(match self {
            Self::Named(s) if s == "oracle" => None,
            Self::Named(s) if s == "synthetic" => Some(Arc::new(ScriptedBackend::synthetic())),
            Self::Named(s) => match s.strip_prefix("scripted:") {
                Some(p) => Some(Arc::new(ScriptedBackend::from_jsonl(&PathBuf::from(p), true)?)),
                None => return Err(LiloError::config(format!("unknown backend {s:?}"))),
            },
            Self::Http(h) => Some(Arc::new(HttpBackend::new(h.clone())?)),
        })
    }

    /// Agent for one session. Language calls are logged to `transcript`;
    /// completions in `replay` are served before the live backend is asked.
    pub fn build(
        &self,
        env: &Environment,
        n_samples: usize,
        seed: u64,
        transcript: &Path,
        replay: &[TranscriptRecord],
    ) -> Result<Arc<dyn Agent>> {
        let Some(live) = self.chat()? else {
            return Ok(Arc::new(OracleAgent::new(env.clone())));
        };
        let backend: Arc<dyn ChatBackend> =
            if replay.is_empty() { live } else { Arc::new(ReplayFirst { replay: ReplayBackend::new(replay), live }) };
        let log = Arc::new(TranscriptLog::to_file(transcript)?);
        let cfg = AgentConfig { n_samples, seed, ..AgentConfig::default() };
        Ok(Arc::new(LlmAgent::new(LlmClient::new(backend, log), cfg)))
    }
}

struct ReplayFirst {
    replay: ReplayBackend,
    live: Arc<dyn ChatBackend>,
}

impl ChatBackend for ReplayFirst {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse> {
        self.replay.complete(req).or_else(|_| self.live.complete(req))
    }

    fn name(&self) -> String {
        self.live.name()
    }
}
