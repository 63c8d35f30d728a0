//! Optimization loops: the language-in-the-loop method, its scalar and
//! LLM-only variants, and the exact-feedback baselines.

pub mod baselines;
pub mod common;
pub mod config;
pub mod lilo;
pub mod proxy;
pub mod trace;

use std::sync::Arc;

pub use baselines::{run_preferential_bo, run_true_utility_bo};
pub use config::{LoopConfig, Method, ProxyMode};
pub use lilo::{run_language_method, run_lilo, run_llm_2step, run_llm_direct, LanguageLoop, GOAL_QUESTION};
pub use trace::{PairLabel, RunManifest, Trace, TrialRecord, UtilityLabel};

use crate::env::Environment;
use crate::error::{LiloError, Result};
use crate::language::agent::Agent;
use crate::language::dm::DecisionMaker;

/// Runs `method`. Language methods need both an agent and a decision maker.
pub fn run_method(
    method: Method,
    env: &Environment,
    cfg: &LoopConfig,
    agent: Option<Arc<dyn Agent>>,
    dm: Option<&dyn DecisionMaker>,
) -> Result<Trace> {
    match method {
        Method::TrueUtilityBo => run_true_utility_bo(env, cfg),
        Method::PreferentialBo => run_preferential_bo(env, cfg),
        m => {
            let (Some(agent), Some(dm)) = (agent, dm) else {
                return Err(LiloError::config(format!("{} needs an agent and a decision maker", m.as_str())));
            };
            run_language_method(m, env, agent, dm, cfg)
        }
    }
}
