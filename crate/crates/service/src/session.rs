//! Session state machine and its on-disk snapshots.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use lilo_core::language::TranscriptLog;
use lilo_core::optimizer::{LanguageLoop, LoopConfig, Method, Trace};
use lilo_core::records::Arm;
use lilo_core::{Environment, LiloError};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backend::AgentSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    AwaitingAnswers,
    RunningTrial,
    /// halted after a failed trial; nothing pending
    Idle,
    Finished,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobState {
    None,
    Running,
    Succeeded,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobView {
    pub id: u64,
    pub state: JobState,
    pub trial: usize,
    pub started_ms: Option<u64>,
    pub finished_ms: Option<u64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: Option<Phase>,
    pub to: Phase,
    pub at_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestArm {
    pub arm: Arm,
    pub utility: Option<f64>,
}

/// Everything a client may read about a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub environment: String,
    pub method: Method,
    pub config: LoopConfig,
    pub phase: Phase,
    /// trial the pending questions belong to
    pub trial: usize,
    pub pending_questions: Vec<String>,
    pub x_names: Vec<String>,
    pub y_names: Vec<String>,
    pub trace: Trace,
    pub max_so_far: Vec<f64>,
    /// arm picked by the outcome-space model after the latest trial
    pub best_arm: Option<BestArm>,
    pub job: JobView,
    pub transitions: Vec<Transition>,
    /// every submitted answer batch, in order
    pub answers: Vec<Vec<String>>,
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

pub struct Session {
    pub view: SessionView,
    /// taken out while a job runs
    pub run: Option<LanguageLoop>,
}

impl Session {
    fn refresh(&mut self) {
        let Some(run) = &self.run else { return };
        let v = &mut self.view;
        v.trial = run.trial();
        v.pending_questions = run.pending_questions().to_vec();
        v.trace = run.trace().clone();
        v.max_so_far = v.trace.max_so_far();
        v.best_arm = v.trace.records.last().and_then(|r| {
            let idx = r.best_arm.as_ref()?;
            let arm = run.arms().iter().find(|a| &a.index == idx)?.clone();
            Some(BestArm { arm, utility: r.best_arm_utility })
        });
    }

    pub fn set_phase(&mut self, to: Phase) {
        let from = self.view.transitions.last().map(|t| t.to);
        if from != Some(to) {
            tracing::info!(session = %self.view.id, ?from, ?to, "transition");
            self.view.transitions.push(Transition { from, to, at_ms: now_ms() });
        }
        self.view.phase = to;
    }

    pub fn after_run(&mut self) {
        self.refresh();
        let done = self.run.as_ref().is_some_and(|r| r.is_finished());
        self.set_phase(if done { Phase::Finished } else { Phase::AwaitingAnswers });
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CreateRequest {
    pub environment: String,
    #[serde(default)]
    pub config: Option<serde_json::Value>,
    #[serde(default)]
    pub method: Option<Method>,
}

/// Failure modes surfaced by the HTTP layer.
#[derive(Debug)]
pub enum ServiceError {
    NotFound(String),
    Invalid { message: String, details: Vec<String> },
    Conflict(String),
    Internal(String),
}

impl From<LiloError> for ServiceError {
    fn from(e: LiloError) -> Self {
        match e {
            LiloError::Config(m) | LiloError::Input(m) => Self::Invalid { message: m, details: Vec::new() },
            other => Self::Internal(other.to_string()),
        }
    }
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        Self::Internal(e.to_string())
    }
}

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub output_dir: PathBuf,
    pub agent: AgentSpec,
}

/// All sessions, each behind its own lock.
pub struct Store {
    pub cfg: ServiceConfig,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

fn new_id() -> String {
    hex::encode(rand::rng().random::<[u8; 12]>())
}

fn parse_config(raw: Option<serde_json::Value>) -> Result<LoopConfig, ServiceError> {
    let cfg: LoopConfig = match raw {
        None => LoopConfig::default(),
        Some(v) => serde_json::from_value(v)
            .map_err(|e| ServiceError::Invalid { message: "config does not parse".into(), details: vec![e.to_string()] })?,
    };
    let problems = cfg.problems();
    if !problems.is_empty() {
        return Err(ServiceError::Invalid { message: "invalid loop config".into(), details: problems });
    }
    Ok(cfg)
}

impl Store {
    pub fn new(cfg: ServiceConfig) -> std::io::Result<Self> {
        fs::create_dir_all(cfg.output_dir.join("sessions"))?;
        Ok(Self { cfg, sessions: Mutex::new(HashMap::new()) })
    }

    fn dir(&self) -> PathBuf {
        self.cfg.output_dir.join("sessions")
    }

    fn transcript_path(&self, id: &str) -> PathBuf {
        self.dir().join(format!("{id}.transcript.jsonl"))
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("store poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        self.sessions
            .lock()
            .expect("store poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("no session {id}")))
    }

    /// Starts a session: asks the initial questions. Blocking.
    pub fn create(&self, req: CreateRequest) -> Result<SessionView, ServiceError> {
        let env = Environment::from_id(&req.environment).map_err(|_| ServiceError::NotFound(format!("unknown environment {:?}", req.environment)))?;
        let cfg = parse_config(req.config)?;
        let method = req.method.unwrap_or(Method::Lilo);
        if !method.uses_language() {
            return Err(ServiceError::Invalid { message: format!("{} takes no language feedback", method.as_str()), details: Vec::new() });
        }
        let id = new_id();
        let session = self.start(&id, env, cfg, method, &[])?;
        let view = session.view.clone();
        self.persist(&view)?;
        self.sessions.lock().expect("store poisoned").insert(id, Arc::new(Mutex::new(session)));
        Ok(view)
    }

    fn start(
        &self,
        id: &str,
        env: Environment,
        cfg: LoopConfig,
        method: Method,
        replay: &[lilo_core::language::TranscriptRecord],
    ) -> Result<Session, ServiceError> {
        let agent = self.cfg.agent.build(&env, cfg.n_llm_samples, cfg.seed, &self.transcript_path(id), replay)?;
        let (x_names, y_names) = (env.space.names.clone(), env.outcome_names.clone());
        let environment = env.id.clone();
        let run = LanguageLoop::start(method, env, cfg.clone(), agent)?;
        let mut s = Session {
            view: SessionView {
                id: id.to_string(),
                environment,
                method,
                config: cfg,
                phase: Phase::AwaitingAnswers,
                trial: 0,
                pending_questions: Vec::new(),
                x_names,
                y_names,
                trace: Trace::default(),
                max_so_far: Vec::new(),
                best_arm: None,
                job: JobView { id: 0, state: JobState::None, trial: 0, started_ms: None, finished_ms: None, error: None },
                transitions: Vec::new(),
                answers: Vec::new(),
            },
            run: Some(run),
        };
        s.after_run();
        Ok(s)
    }

    /// Writes the session view as JSON next to its trace.
    pub fn persist(&self, view: &SessionView) -> Result<(), ServiceError> {
        let path = self.dir().join(format!("{}.json", view.id));
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(view).map_err(|e| ServiceError::Internal(e.to_string()))?)?;
        fs::rename(&tmp, &path)?;
        let trace = view.trace.to_jsonl().map_err(|e| ServiceError::Internal(e.to_string()))?;
        fs::write(self.dir().join(format!("{}.trace.jsonl", view.id)), trace)?;
        Ok(())
    }

    /// Rebuilds every persisted session by replaying its answers; logged
    /// completions are reused so chat-backed sessions come back unchanged.
    pub fn restore(&self) -> Result<usize, ServiceError> {
        let mut n = 0;
        let mut paths: Vec<PathBuf> = fs::read_dir(self.dir())?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for p in paths {
            match self.restore_one(&p) {
                Ok(()) => n += 1,
                Err(e) => tracing::warn!(path = %p.display(), "session not restored: {e:?}"),
            }
        }
        Ok(n)
    }

    fn restore_one(&self, path: &Path) -> Result<(), ServiceError> {
        let text = fs::read_to_string(path)?;
        let old: SessionView = serde_json::from_str(&text).map_err(|e| ServiceError::Internal(e.to_string()))?;
        let tpath = self.transcript_path(&old.id);
        let replay = if tpath.exists() { TranscriptLog::read_jsonl(&tpath)? } else { Vec::new() };
        let _ = fs::remove_file(&tpath);
        let env = Environment::from_id(&old.environment)?;
        let mut s = self.start(&old.id, env, old.config.clone(), old.method, &replay)?;
        for batch in &old.answers {
            let run = s.run.as_mut().expect("fresh session has its loop");
            run.submit_answers(batch.clone())?;
            s.view.answers.push(batch.clone());
        }
        s.after_run();
        s.view.transitions = old.transitions;
        s.view.job = old.job;
        let to = if old.phase == Phase::Idle { Phase::Idle } else { s.view.phase };
        s.set_phase(to);
        self.persist(&s.view)?;
        self.sessions.lock().expect("store poisoned").insert(old.id, Arc::new(Mutex::new(s)));
        Ok(())
    }
}
