use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use lilo_core::env::registered_ids;
use lilo_core::language::HttpConfig;
use lilo_core::optimizer::{LoopConfig, Method};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Where language calls go.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BackendSpec {
    /// `"oracle"`, `"synthetic"` or `"scripted:<path>"`
    Named(String),
    Http(HttpConfig),
}

impl Default for BackendSpec {
    fn default() -> Self {
        Self::Named("oracle".into())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Backend {
    /// ground-truth labels and utilities, no language model
    Oracle,
    /// well-formed canned completions
    Synthetic,
    Scripted(PathBuf),
    Http,
}

impl BackendSpec {
    pub fn kind(&self) -> Result<Backend> {
        match self {
            Self::Http(_) => Ok(Backend::Http),
            Self::Named(s) if s == "oracle" => Ok(Backend::Oracle),
            Self::Named(s) if s == "synthetic" => Ok(Backend::Synthetic),
            Self::Named(s) => match s.strip_prefix("scripted:") {
                Some(p) if !p.is_empty() => Ok(Backend::Scripted(PathBuf::from(p))),
                _ => Err(BenchError::Config(vec![format!("backend: unknown backend {s:?}")])),
            },
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Named(s) => s.clone(),
            Self::Http(h) => format!("http:{}", h.model),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DmSpec {
    /// templated answers from the ground-truth utility
    #[default]
    Oracle,
    /// the chat backend role-plays the decision maker
    Llm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub environments: Vec<String>,
    pub methods: Vec<Method>,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default, rename = "loop")]
    pub loop_config: LoopConfig,
    #[serde(default)]
    pub backend: BackendSpec,
    #[serde(default)]
    pub dm: DmSpec,
    /// votes per pair from the oracle labeler
    #[serde(default = "one")]
    pub oracle_votes: usize,
    pub output_dir: PathBuf,
    /// worker threads; `None` uses every core
    #[serde(default)]
    pub workers: Option<usize>,
}

fn one() -> usize {
    1
}

impl BenchmarkConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| BenchError::Config(vec![e.to_string()]))
    }

    /// Reads a config file; a relative `output_dir` is taken relative to
    /// the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.output_dir.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.output_dir = parent.join(&cfg.output_dir);
            }
        }
        Ok(cfg)
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.replications == 0 {
            out.push("replications must be at least 1".into());
        }
        if self.environments.is_empty() {
            out.push("environments must not be empty".into());
        }
        if self.methods.is_empty() {
            out.push("methods must not be empty".into());
        }
        for e in &self.environments {
            if !registered_ids().contains(&e.as_str()) {
                out.push(format!("environments: unknown id {e:?}"));
            }
        }
        let dup_env: BTreeSet<&String> = self.environments.iter().collect();
        if dup_env.len() != self.environments.len() {
            out.push("environments: duplicate id".into());
        }
        if self.oracle_votes == 0 {
            out.push("oracle_votes must be at least 1".into());
        }
        if self.workers == Some(0) {
            out.push("workers must be at least 1".into());
        }
        out.extend(self.loop_config.problems().into_iter().map(|p| format!("loop: {p}")));
        match self.backend.kind() {
            Err(BenchError::Config(p)) => out.extend(p),
            Ok(Backend::Oracle) => {
                for m in &self.methods {
                    if matches!(m, Method::Llm2step | Method::LlmDirect) {
                        out.push(format!("methods: {} needs a chat backend", m.as_str()));
                    }
                }
                if self.loop_config.prior_text.is_some() {
                    out.push("loop: prior_text needs a chat backend".into());
                }
                if self.dm == DmSpec::Llm {
                    out.push("dm: llm needs a chat backend".into());
                }
            }
            _ => {}
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(BenchError::Config(p))
        }
    }

    /// Seed of replicate `rep`.
    pub fn seed_for(&self, rep: usize) -> u64 {
        self.loop_config.seed + rep as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
environments = ["dtlz2-l1"]
methods = ["true-utility-bo", "lilo"]
replications = 2
output_dir = "out"

[loop]
trials = 3
seed = 100
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = BenchmarkConfig::from_toml(BASIC).unwrap();
        assert_eq!(cfg.methods, vec![Method::TrueUtilityBo, Method::Lilo]);
        assert_eq!(cfg.loop_config.trials, 3);
        assert_eq!(cfg.loop_config.feedback_batch, 2);
        assert_eq!(cfg.backend.kind().unwrap(), Backend::Oracle);
        assert_eq!(cfg.seed_for(1), 101);
        cfg.validate().unwrap();
    }

    #[test]
    fn lists_every_problem() {
        let text = BASIC.replace("replications = 2", "replications = 0").replace("\"dtlz2-l1\"", "\"nope\"")
            + "feedback_batch = 0\n";
        let Err(BenchError::Config(p)) = BenchmarkConfig::from_toml(&text).unwrap().validate() else {
            panic!("expected config error");
        };
        assert_eq!(p.len(), 3, "{p:?}");
    }

    #[test]
    fn backend_forms() {
        let named = |s: &str| BackendSpec::Named(s.into()).kind();
        assert_eq!(named("scripted:/tmp/a.jsonl").unwrap(), Backend::Scripted("/tmp/a.jsonl".into()));
        assert!(named("scripted:").is_err());
        assert!(named("gpt").is_err());
        let text = BASIC.to_string() + "\n[backend]\nendpoint = \"http://localhost:1/v1/chat/completions\"\nmodel = \"m\"\n";
        let cfg = BenchmarkConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.backend.kind().unwrap(), Backend::Http);
        assert_eq!(cfg.backend.label(), "http:m");
    }

    #[test]
    fn oracle_backend_cannot_propose() {
        let text = BASIC.replace("\"lilo\"", "\"llm-direct\"");
        assert!(BenchmarkConfig::from_toml(&text).unwrap().validate().is_err());
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(BenchmarkConfig::from_toml(&(BASIC.to_string() + "bogus = 1\n")).is_err());
    }
}
