//! Chat backends: HTTP, scripted (canned completions) and transcript replay.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LiloError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Purpose {
    InitQuestions,
    Questions,
    PairwiseLabel,
    ScalarUtility,
    Summary,
    InitCandidates,
    Candidates2step,
    CandidatesDirect,
    DmAnswers,
}

impl Purpose {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::InitQuestions => "init-questions",
            Self::Questions => "questions",
            Self::PairwiseLabel => "pairwise-label",
            Self::ScalarUtility => "scalar-utility",
            Self::Summary => "summary",
            Self::InitCandidates => "init-candidates",
            Self::Candidates2step => "candidates-2step",
            Self::CandidatesDirect => "candidates-direct",
            Self::DmAnswers => "dm-answers",
        }
    }

    pub const ALL: [Purpose; 9] = [
        Self::InitQuestions,
        Self::Questions,
        Self::PairwiseLabel,
        Self::ScalarUtility,
        Self::Summary,
        Self::InitCandidates,
        Self::Candidates2step,
        Self::CandidatesDirect,
        Self::DmAnswers,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub purpose: Purpose,
    pub trial: usize,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
    /// Structured facts about the request (counts, arm ids) that offline
    /// backends use to fill or synthesize completions.
    #[serde(default)]
    pub vars: BTreeMap<String, String>,
}

impl ChatRequest {
    /// Stable digest of everything that determines the completion.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.purpose.as_str().as_bytes());
        for m in &self.messages {
            h.update([0u8]);
            h.update(serde_json::to_string(&m.role).unwrap_or_default().as_bytes());
            h.update([0u8]);
            h.update(m.content.as_bytes());
        }
        h.update(self.temperature.to_bits().to_le_bytes());
        h.update(self.seed.unwrap_or(u64::MAX).to_le_bytes());
        hex::encode(h.finalize())
    }

    pub fn prompt_text(&self) -> String {
        self.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n\n")
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse>;

    fn name(&self) -> String;
}

/// OpenAI-style chat-completions endpoint settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    /// name of the environment variable holding the bearer token
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub requests_per_minute: Option<u32>,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: String::new(),
            api_key_env: Some("LILO_API_KEY".into()),
            timeout_secs: 120,
            max_in_flight: 4,
            requests_per_minute: None,
        }
    }
}

struct Limiter {
    in_flight: Mutex<usize>,
    freed: Condvar,
    max_in_flight: usize,
    window: Mutex<VecDeque<Instant>>,
    per_minute: Option<u32>,
}

impl Limiter {
    fn acquire(&self) {
        let mut n = self.in_flight.lock().expect("limiter poisoned");
        while *n >= self.max_in_flight {
            n = self.freed.wait(n).expect("limiter poisoned");
        }
        *n += 1;
        drop(n);
        if let Some(cap) = self.per_minute {
            loop {
                let mut w = self.window.lock().expect("limiter poisoned");
                let now = Instant::now();
                while w.front().is_some_and(|t| now.duration_since(*t) >= Duration::from_secs(60)) {
                    w.pop_front();
                }
                if w.len() < cap as usize {
                    w.push_back(now);
                    break;
                }
                let wait = Duration::from_secs(60) - now.duration_since(*w.front().expect("non-empty"));
                drop(w);
                std::thread::sleep(wait);
            }
        }
    }

    fn release(&self) {
        *self.in_flight.lock().expect("limiter poisoned") -= 1;
        self.freed.notify_one();
    }
}

pub struct HttpBackend {
    cfg: HttpConfig,
    token: Option<String>,
    client: reqwest::blocking::Client,
    limiter: Limiter,
}

#[derive(Deserialize)]
struct WireChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    usage: Option<WireUsage>,
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Result<Self> {
        if cfg.endpoint.trim().is_empty() {
            return Err(LiloError::config("chat backend endpoint is not configured"));
        }
        if cfg.model.trim().is_empty() {
            return Err(LiloError::config("chat backend model is not configured"));
        }
        let token = match &cfg.api_key_env {
            Some(var) => std::env::var(var).ok(),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| LiloError::Backend(e.to_string()))?;
        let limiter = Limiter {
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            max_in_flight: cfg.max_in_flight.max(1),
            window: Mutex::new(VecDeque::new()),
            per_minute: cfg.requests_per_minute,
        };
        Ok(Self { cfg, token, client, limiter })
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse> {
        let mut body = serde_json::json!({
            "model": self.cfg.model,
            "messages": req.messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        if let Some(seed) = req.seed {
            body["seed"] = serde_json::json!(seed);
        }
        self.limiter.acquire();
        let started = Instant::now();
        let mut call = self.client.post(&self.cfg.endpoint).json(&body);
        if let Some(t) = &self.token {
            call = call.bearer_auth(t);
        }
        let sent = call.send();
        self.limiter.release();
        let resp = sent.map_err(|e| LiloError::Backend(format!("request failed: {e}")))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| LiloError::Backend(e.to_string()))?;
        if !status.is_success() {
            return Err(LiloError::Backend(format!("HTTP {status}: {}", text.chars().take(500).collect::<String>())));
        }
        let wire: WireResponse =
            serde_json::from_str(&text).map_err(|e| LiloError::Backend(format!("malformed response body: {e}")))?;
        let choice = wire
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| LiloError::Backend("response has no choices".into()))?;
        let usage = wire.usage;
        let out = ChatResponse {
            text: choice.message.content,
            prompt_tokens: usage.as_ref().and_then(|u| u.prompt_tokens),
            completion_tokens: usage.as_ref().and_then(|u| u.completion_tokens),
        };
        tracing::info!(
            request_id = %req.hash()[..12],
            purpose = req.purpose.as_str(),
            latency_ms = started.elapsed().as_millis() as u64,
            prompt_tokens = out.prompt_tokens,
            completion_tokens = out.completion_tokens,
            "chat completion"
        );
        Ok(out)
    }

    fn name(&self) -> String {
        format!("http:{}", self.cfg.model)
    }
}

/// One canned completion in a script file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub purpose: Purpose,
    pub completion: String,
}

/// Serves canned completions round-robin per purpose. `{{var}}` in a
/// completion is replaced from the request's vars. With `synthesize`, a
/// purpose without entries gets a well-formed default answer.
pub struct ScriptedBackend {
    entries: BTreeMap<Purpose, Vec<String>>,
    cursor: Mutex<HashMap<Purpose, usize>>,
    synthesize: bool,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>, synthesize: bool) -> Self {
        let mut map: BTreeMap<Purpose, Vec<String>> = BTreeMap::new();
        for e in entries {
            map.entry(e.purpose).or_default().push(e.completion);
        }
        Self { entries: map, cursor: Mutex::new(HashMap::new()), synthesize }
    }

    /// Only synthesized answers.
    pub fn synthetic() -> Self {
        Self::new(Vec::new(), true)
    }

    pub fn from_jsonl(path: &Path, synthesize: bool) -> Result<Self> {
        let file = File::open(path)?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: ScriptEntry = serde_json::from_str(&line)
                .map_err(|e| LiloError::config(format!("{}:{}: {e}", path.display(), i + 1)))?;
            entries.push(e);
        }
        Ok(Self::new(entries, synthesize))
    }

    fn fill(template: &str, vars: &BTreeMap<String, String>) -> String {
        let mut out = template.to_string();
        for (k, v) in vars {
            out = out.replace(&format!("{{{{{k}}}}}"), v);
        }
        out
    }
}

fn var_usize(req: &ChatRequest, key: &str) -> Result<usize> {
    req.vars
        .get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| LiloError::Backend(format!("cannot synthesize {}: missing var {key}", req.purpose.as_str())))
}

/// Well-formed placeholder completion for `req`.
pub fn synthesize_completion(req: &ChatRequest) -> Result<String> {
    let fenced = |v: serde_json::Value| format!("```json\n{}\n```", serde_json::to_string_pretty(&v).unwrap_or_default());
    match req.purpose {
        Purpose::InitQuestions | Purpose::Questions => {
            let n = var_usize(req, "n_questions")?;
            let obj: serde_json::Map<String, serde_json::Value> = (1..=n)
                .map(|i| (format!("q{i}"), serde_json::json!(format!("Which outcomes matter most to you (question {i})?"))))
                .collect();
            Ok(fenced(serde_json::Value::Object(obj)))
        }
        Purpose::DmAnswers => {
            let n = var_usize(req, "n_questions")?;
            let obj: serde_json::Map<String, serde_json::Value> =
                (1..=n).map(|i| (format!("q{i}"), serde_json::json!("I do not have a strong opinion on this."))).collect();
            Ok(fenced(serde_json::Value::Object(obj)))
        }
        Purpose::PairwiseLabel => Ok(fenced(serde_json::json!({"reasoning": "no preference information", "answer": 0}))),
        Purpose::Summary => Ok(fenced(serde_json::json!({"summary": ""}))),
        Purpose::ScalarUtility => {
            let arms = req
                .vars
                .get("arm_indices")
                .ok_or_else(|| LiloError::Backend("cannot synthesize scalar-utility: missing var arm_indices".into()))?;
            let lines: Vec<String> = arms
                .split(',')
                .filter(|a| !a.is_empty())
                .map(|a| serde_json::json!({"arm_index": a, "reasoning": "no information", "p_accept": 0.5}).to_string())
                .collect();
            Ok(format!("```jsonl\n{}\n```", lines.join("\n")))
        }
        Purpose::InitCandidates | Purpose::Candidates2step | Purpose::CandidatesDirect => {
            let n = var_usize(req, "n_candidates")?;
            let d = var_usize(req, "dim")?;
            let obj: serde_json::Map<String, serde_json::Value> = (0..n)
                .map(|i| (i.to_string(), serde_json::json!(vec![(i + 1) as f64 / (n + 1) as f64; d])))
                .collect();
            Ok(fenced(serde_json::Value::Object(obj)))
        }
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse> {
        let text = match self.entries.get(&req.purpose) {
            Some(list) if !list.is_empty() => {
                let mut cur = self.cursor.lock().expect("script cursor poisoned");
                let i = cur.entry(req.purpose).or_insert(0);
                let t = Self::fill(&list[*i % list.len()], &req.vars);
                *i += 1;
                t
            }
            _ if self.synthesize => synthesize_completion(req)?,
            _ => {
                return Err(LiloError::Backend(format!("script has no completion for purpose {}", req.purpose.as_str())))
            }
        };
        Ok(ChatResponse { text, ..Default::default() })
    }

    fn name(&self) -> String {
        "scripted".into()
    }
}

/// One logged backend call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub trial: usize,
    pub purpose: Purpose,
    pub request_hash: String,
    pub prompt: String,
    pub completion: String,
    pub latency_ms: u64,
    pub parse_status: String,
}

/// Append-only transcript, optionally mirrored to a JSONL file.
#[derive(Default)]
pub struct TranscriptLog {
    records: Mutex<Vec<TranscriptRecord>>,
    sink: Mutex<Option<File>>,
    path: Option<PathBuf>,
}

impl TranscriptLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn to_file(path: &Path) -> Result<Self> {
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { records: Mutex::new(Vec::new()), sink: Mutex::new(Some(f)), path: Some(path.to_path_buf()) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn append(&self, rec: TranscriptRecord) -> Result<()> {
        let mut sink = self.sink.lock().expect("transcript poisoned");
        if let Some(f) = sink.as_mut() {
            writeln!(f, "{}", serde_json::to_string(&rec)?)?;
        }
        self.records.lock().expect("transcript poisoned").push(rec);
        Ok(())
    }

    pub fn records(&self) -> Vec<TranscriptRecord> {
        self.records.lock().expect("transcript poisoned").clone()
    }

    pub fn read_jsonl(path: &Path) -> Result<Vec<TranscriptRecord>> {
        let file = File::open(path)?;
        BufReader::new(file)
            .lines()
            .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
            .map(|l| Ok(serde_json::from_str(&l?)?))
            .collect()
    }
}

/// Replays logged completions by request hash, in logged order.
pub struct ReplayBackend {
    by_hash: Mutex<HashMap<String, VecDeque<String>>>,
}

impl ReplayBackend {
    pub fn new(records: &[TranscriptRecord]) -> Self {
        let mut map: HashMap<String, VecDeque<String>> = HashMap::new();
        for r in records {
            map.entry(r.request_hash.clone()).or_default().push_back(r.completion.clone());
        }
        Self { by_hash: Mutex::new(map) }
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse> {
        let h = req.hash();
        let mut map = self.by_hash.lock().expect("replay poisoned");
        let text = map
            .get_mut(&h)
            .and_then(|q| q.pop_front())
            .ok_or_else(|| LiloError::Backend(format!("no logged completion for request {}", &h[..12])))?;
        Ok(ChatResponse { text, ..Default::default() })
    }

    fn name(&self) -> String {
        "replay".into()
    }
}
