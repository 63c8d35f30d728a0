//! Chat backends, prompt templates, output parsing, and the language-facing
//! agent and decision-maker roles.

pub mod agent;
pub mod backend;
pub mod client;
pub mod dm;
pub mod parse;
pub mod prompts;

pub use agent::{Agent, AgentConfig, Context, LabelVote, LlmAgent, OracleAgent};
pub use backend::{
    ChatBackend, ChatMessage, ChatRequest, ChatResponse, HttpBackend, HttpConfig, Purpose, ReplayBackend, ScriptEntry,
    ScriptedBackend, TranscriptLog, TranscriptRecord,
};
pub use client::{CallSpec, LlmClient};
pub use dm::{DecisionMaker, LlmDm, ScriptedDm};
