//! Replicate dispatch and trace persistence.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use lilo_core::env::oracle::{AnswerMode, OracleDm};
use lilo_core::language::{
    Agent, AgentConfig, ChatBackend, DecisionMaker, HttpBackend, LlmAgent, LlmClient, LlmDm, OracleAgent,
    ScriptedBackend, TranscriptLog,
};
use lilo_core::optimizer::{run_method, Method, RunManifest, Trace};
use lilo_core::Environment;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Backend, BackendSpec, BenchmarkConfig, DmSpec};
use crate::error::{BenchError, Result};
use crate::report::AggregateReport;

/// One (environment, method, replicate) cell.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Job {
    pub environment: String,
    pub method: Method,
    pub replicate: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub environment: String,
    pub method: Method,
    pub replicate: usize,
    pub seed: u64,
    pub error: String,
}

pub struct RunOutcome {
    pub report: AggregateReport,
    pub failures: Vec<Failure>,
    pub total: usize,
    /// cells whose trace was already on disk
    pub reused: usize,
}

impl RunOutcome {
    /// More than a tenth of the replicates failed.
    pub fn too_many_failures(&self) -> bool {
        self.failures.len() * 10 > self.total
    }
}

pub const FAILURES_FILE: &str = "failures.json";

pub fn traces_dir(output_dir: &Path) -> PathBuf {
    output_dir.join("traces")
}

pub fn trace_path(traces: &Path, job: &Job) -> PathBuf {
    traces.join(&job.environment).join(job.method.as_str()).join(format!("rep_{:03}.jsonl", job.replicate))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

pub fn jobs(cfg: &BenchmarkConfig) -> Vec<Job> {
    let mut out = Vec::new();
    for e in &cfg.environments {
        for &m in &cfg.methods {
            for r in 0..cfg.replications {
                out.push(Job { environment: e.clone(), method: m, replicate: r });
            }
        }
    }
    out
}

fn chat_backend(spec: &BackendSpec) -> Result<Arc<dyn ChatBackend>> {
    Ok(match spec.kind()? {
        Backend::Synthetic => Arc::new(ScriptedBackend::synthetic()),
        Backend::Scripted(p) => Arc::new(ScriptedBackend::from_jsonl(&p, true)?),
        Backend::Http => match spec {
            BackendSpec::Http(h) => Arc::new(HttpBackend::new(h.clone())?),
            BackendSpec::Named(_) => unreachable!("kind() said http"),
        },
        Backend::Oracle => return Err(BenchError::Config(vec!["backend: oracle has no chat endpoint".into()])),
    })
}

/// Runs one replicate. Language calls, if any, are logged to `transcript`.
pub fn run_job(cfg: &BenchmarkConfig, job: &Job, transcript: Option<&Path>) -> Result<Trace> {
    let env = Environment::from_id(&job.environment)?;
    let seed = cfg.seed_for(job.replicate);
    let loop_cfg = lilo_core::optimizer::LoopConfig { seed, ..cfg.loop_config.clone() };
    if !job.method.uses_language() {
        return Ok(run_method(job.method, &env, &loop_cfg, None, None)?);
    }
    let oracle_dm = OracleDm::new(env.clone(), AnswerMode::TemplatedText);
    let trace = if cfg.backend.kind()? == Backend::Oracle {
        let agent = Arc::new(OracleAgent { environment: env.clone(), n_votes: cfg.oracle_votes });
        run_method(job.method, &env, &loop_cfg, Some(agent), Some(&oracle_dm))?
    } else {
        let log = Arc::new(match transcript {
            Some(p) => TranscriptLog::to_file(p)?,
            None => TranscriptLog::in_memory(),
        });
        let backend = chat_backend(&cfg.backend)?;
        let agent_cfg = AgentConfig { n_samples: loop_cfg.n_llm_samples, seed, ..AgentConfig::default() };
        let agent: Arc<dyn Agent> = Arc::new(LlmAgent::new(LlmClient::new(backend.clone(), log.clone()), agent_cfg));
        let llm_dm;
        let dm: &dyn DecisionMaker = match cfg.dm {
            DmSpec::Oracle => &oracle_dm,
            DmSpec::Llm => {
                llm_dm = LlmDm { client: LlmClient::new(backend, log), environment: env.clone(), seed };
                &llm_dm
            }
        };
        run_method(job.method, &env, &loop_cfg, Some(agent), Some(dm))?
    };
    Ok(trace)
}

fn manifest_for(cfg: &BenchmarkConfig, job: &Job) -> RunManifest {
    let loop_cfg = lilo_core::optimizer::LoopConfig { seed: cfg.seed_for(job.replicate), ..cfg.loop_config.clone() };
    RunManifest::new(job.method, &job.environment, &loop_cfg, &cfg.backend.label())
}

/// A trace on disk whose manifest matches this config can be reused.
fn reusable(path: &Path, manifest: &RunManifest) -> bool {
    let Ok(text) = fs::read_to_string(sibling(path, "manifest.json")) else {
        return false;
    };
    match serde_json::from_str::<RunManifest>(&text) {
        Ok(m) => {
            m.method == manifest.method
                && m.environment == manifest.environment
                && m.config == manifest.config
                && m.backend == manifest.backend
                && path.exists()
        }
        Err(_) => false,
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = sibling(path, "tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Runs one cell and persists its trace and manifest.
fn execute(cfg: &BenchmarkConfig, traces: &Path, job: &Job) -> std::result::Result<bool, String> {
    let path = trace_path(traces, job);
    let manifest = manifest_for(cfg, job);
    if reusable(&path, &manifest) {
        return Ok(true);
    }
    let span = tracing::info_span!("replicate", env = %job.environment, method = job.method.as_str(), rep = job.replicate);
    let _g = span.enter();
    let go = || -> Result<()> {
        fs::create_dir_all(path.parent().expect("trace path has a parent"))?;
        let transcript = sibling(&path, "transcript.jsonl");
        let _ = fs::remove_file(&transcript);
        let trace = run_job(cfg, job, Some(&transcript))?;
        tracing::info!(final_max = trace.max_so_far().last().copied().unwrap_or(f64::NAN), "replicate done");
        write_atomic(&path, trace.to_jsonl()?.as_bytes())?;
        write_atomic(&sibling(&path, "manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
        Ok(())
    };
    match go() {
        Ok(()) => Ok(false),
        Err(e) => {
            tracing::warn!("replicate failed: {e}");
            let _ = fs::remove_file(&path);
            Err(e.to_string())
        }
    }
}

/// Runs every cell of the matrix (reusing matching traces already on disk),
/// then aggregates from the persisted traces.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let traces = traces_dir(&cfg.output_dir);
    fs::create_dir_all(&traces)?;
    let all = jobs(cfg);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| BenchError::Config(vec![format!("workers: {e}")]))?;
    let results: Vec<std::result::Result<bool, String>> =
        pool.install(|| all.par_iter().map(|j| execute(cfg, &traces, j)).collect());
    let mut failures = Vec::new();
    let mut reused = 0;
    for (job, r) in all.iter().zip(results) {
        match r {
            Ok(true) => reused += 1,
            Ok(false) => {}
            Err(error) => failures.push(Failure {
                environment: job.environment.clone(),
                method: job.method,
                replicate: job.replicate,
                seed: cfg.seed_for(job.replicate),
                error,
            }),
        }
    }
    write_atomic(&traces.join(FAILURES_FILE), serde_json::to_string_pretty(&failures)?.as_bytes())?;
    let report = AggregateReport::from_dir(&traces)?;
    Ok(RunOutcome { report, failures, total: all.len(), reused })
}
