//! The language-in-the-loop schedule as a resumable state machine. Each
//! call to [`LanguageLoop::submit_answers`] consumes the decision maker's
//! answers and runs until the next set of questions (or the end).

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::common::{acquire, choose_pairs, derive_seed, evaluate, initial_design, max_utility, model_best, y_features, STREAM_PAIRS};
use super::config::{LoopConfig, Method, ProxyMode};
use super::proxy::{fit_proxy_models_pairwise, fit_proxy_models_scalar, means, ProxyFit};
use super::trace::{Trace, TrialRecord};
use crate::acquisition::PairStrategy;
use crate::env::Environment;
use crate::error::{LiloError, Result};
use crate::language::agent::{Agent, Context};
use crate::language::dm::DecisionMaker;
use crate::records::{Arm, QaPair};
use crate::Surrogate;

pub const GOAL_QUESTION: &str = "What is your goal?";

pub struct LanguageLoop {
    method: Method,
    env: Environment,
    cfg: LoopConfig,
    agent: Arc<dyn Agent>,
    arms: Vec<Arm>,
    feedback: Vec<QaPair>,
    my: Option<Surrogate>,
    mx: Option<Surrogate>,
    rng: ChaCha8Rng,
    trace: Trace,
    /// trial whose questions are pending; 0 is the entry-point exchange
    trial: usize,
    pending: Vec<String>,
    current: TrialRecord,
    finished: bool,
}

impl LanguageLoop {
    /// Records the seed message and asks the initial questions.
    pub fn start(method: Method, env: Environment, mut cfg: LoopConfig, agent: Arc<dyn Agent>) -> Result<Self> {
        if !method.uses_language() {
            return Err(LiloError::config(format!("{} does not use language feedback", method.as_str())));
        }
        if method == Method::LiloScalar {
            cfg.proxy_mode = ProxyMode::Scalar;
        }
        cfg.validate()?;
        env.validate()?;
        let seed_qa = QaPair::new(GOAL_QUESTION, env.seed_message.clone());
        let mut s = Self {
            method,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_PAIRS, 0)),
            env,
            cfg,
            agent,
            arms: Vec::new(),
            feedback: vec![seed_qa.clone()],
            my: None,
            mx: None,
            trace: Trace::default(),
            trial: 0,
            pending: Vec::new(),
            current: TrialRecord { trial: 0, feedback: vec![seed_qa], ..TrialRecord::default() },
            finished: false,
        };
        let n = s.cfg.feedback_batch;
        s.pending = s.agent.init_questions(&s.context(0), n).map_err(|e| e.at_trial(0))?;
        Ok(s)
    }

    fn context(&self, trial: usize) -> Context<'_> {
        Context {
            trial,
            x_names: &self.env.space.names,
            y_names: &self.env.outcome_names,
            arms: &self.arms,
            feedback: &self.feedback,
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    pub fn config(&self) -> &LoopConfig {
        &self.cfg
    }

    pub fn pending_questions(&self) -> &[String] {
        &self.pending
    }

    /// Trial the pending questions belong to.
    pub fn trial(&self) -> usize {
        self.trial
    }

    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    pub fn feedback(&self) -> &[QaPair] {
        &self.feedback
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Completed trial records so far.
    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    /// Answers to the pending questions, in order.
    pub fn submit_answers(&mut self, answers: Vec<String>) -> Result<()> {
        if self.finished {
            return Err(LiloError::config("the run has finished"));
        }
        if answers.len() != self.pending.len() {
            return Err(LiloError::input(format!("expected {} answers, got {}", self.pending.len(), answers.len())));
        }
        let n = self.trial;
        let qa: Vec<QaPair> = std::mem::take(&mut self.pending).into_iter().zip(answers).map(|(q, a)| QaPair::new(q, a)).collect();
        self.feedback.extend(qa.iter().cloned());
        self.current.feedback.extend(qa);
        self.step(n).map_err(|e| e.at_trial(n))
    }

    fn step(&mut self, n: usize) -> Result<()> {
        if n > 0 {
            self.close_trial(n)?;
        } else {
            self.trace.records.push(std::mem::take(&mut self.current));
        }
        if n == self.cfg.trials {
            self.finished = true;
            return Ok(());
        }
        self.open_trial(n + 1).map_err(|e| e.at_trial(n + 1))
    }

    fn open_trial(&mut self, n: usize) -> Result<()> {
        self.trial = n;
        let q = self.cfg.batch_for(self.env.dim());
        let ctx = self.context(n);
        let units = if n == 1 {
            match &self.cfg.prior_text {
                Some(prior) => self.agent.init_candidates(&ctx, prior, q)?,
                None => initial_design(&self.cfg, self.env.dim(), q)?,
            }
        } else {
            match self.method {
                Method::Llm2step => {
                    let my = self.my.as_ref().ok_or_else(|| LiloError::ModelFit("no outcome model".into()))?;
                    let est = means(my, &y_features(&self.env, &self.arms))?;
                    self.agent.candidates_two_step(&ctx, &est, q)?
                }
                Method::LlmDirect => self.agent.candidates_direct(&ctx, q)?,
                _ => {
                    let mx = self.mx.as_ref().ok_or_else(|| LiloError::ModelFit("no input model".into()))?;
                    acquire(mx, &self.arms, &self.cfg, n, q)?
                }
            }
        };
        if units.len() != q {
            return Err(LiloError::input(format!("expected {q} candidates, got {}", units.len())));
        }
        let new = evaluate(&self.env, n, &units)?;
        let utilities = new.iter().map(|a| self.env.utility(&a.y)).collect::<Result<Vec<_>>>()?;
        self.arms.extend(new.iter().cloned());
        self.current = TrialRecord { trial: n, arms: new, utilities, ..TrialRecord::default() };

        let b = self.cfg.feedback_batch;
        let highlighted = match self.method {
            Method::Lilo | Method::LiloScalar if self.arms.len() >= 2 => {
                let strategy = if self.my.is_none() { PairStrategy::Random } else { self.cfg.pair_strategy };
                let pairs =
                    choose_pairs(&self.env, &self.arms, self.my.as_ref(), self.mx.as_ref(), strategy, b, &mut self.rng)?;
                let mut h: Vec<usize> = pairs.iter().flat_map(|&(i, j)| [i, j]).collect();
                h.sort_unstable();
                h.dedup();
                Some(h)
            }
            Method::Lilo | Method::LiloScalar => Some(vec![0]),
            _ => None,
        };
        self.current.highlighted = highlighted.iter().flatten().map(|&i| self.arms[i].index.clone()).collect();
        let ctx = self.context(n);
        self.pending = self.agent.questions(&ctx, highlighted.as_deref(), b)?;
        Ok(())
    }

    fn close_trial(&mut self, n: usize) -> Result<()> {
        let ctx = Context {
            trial: n,
            x_names: &self.env.space.names,
            y_names: &self.env.outcome_names,
            arms: &self.arms,
            feedback: &self.feedback,
        };
        let fit: Option<ProxyFit> = match (self.method, self.cfg.proxy_mode) {
            (Method::LlmDirect, _) => None,
            (method, ProxyMode::Pairwise) if self.arms.len() >= 2 => Some(fit_proxy_models_pairwise(
                &self.env,
                self.agent.as_ref(),
                &ctx,
                self.my.as_ref(),
                self.mx.as_ref(),
                &self.cfg,
                method != Method::Llm2step,
                &mut self.rng,
            )?),
            (method, _) => Some(fit_proxy_models_scalar(&self.env, self.agent.as_ref(), &ctx, &self.cfg, method != Method::Llm2step)?),
        };
        let mut rec = std::mem::take(&mut self.current);
        rec.max_utility = Some(max_utility(&self.env, &self.arms)?);
        if let Some(fit) = fit {
            rec.models = fit.summaries();
            rec.summary = Some(fit.summary.clone());
            rec.pair_labels = fit.pair_labels;
            rec.utility_labels = fit.utility_labels;
            let best = model_best(&self.env, &self.arms, &fit.my)?;
            rec.best_arm = Some(self.arms[best].index.clone());
            rec.best_arm_utility = Some(self.env.utility(&self.arms[best].y)?);
            self.my = Some(fit.my);
            if fit.mx.is_some() {
                self.mx = fit.mx;
            }
        }
        self.trace.records.push(rec);
        Ok(())
    }
}

/// Drives a [`LanguageLoop`] to completion with `dm` answering.
pub fn run_language_method(
    method: Method,
    env: &Environment,
    agent: Arc<dyn Agent>,
    dm: &dyn DecisionMaker,
    cfg: &LoopConfig,
) -> Result<Trace> {
    let mut run = LanguageLoop::start(method, env.clone(), cfg.clone(), agent)?;
    while !run.is_finished() {
        let t = run.trial();
        let answers = dm.answer(t, run.pending_questions(), run.arms()).map_err(|e| e.at_trial(t))?;
        run.submit_answers(answers)?;
    }
    Ok(run.into_trace())
}

/// Language-in-the-loop optimization; `cfg.proxy_mode` picks pairwise or
/// scalar proxies.
pub fn run_lilo(env: &Environment, agent: Arc<dyn Agent>, dm: &dyn DecisionMaker, cfg: &LoopConfig) -> Result<Trace> {
    let method = match cfg.proxy_mode {
        ProxyMode::Pairwise => Method::Lilo,
        ProxyMode::Scalar => Method::LiloScalar,
    };
    run_language_method(method, env, agent, dm, cfg)
}

pub fn run_llm_2step(env: &Environment, agent: Arc<dyn Agent>, dm: &dyn DecisionMaker, cfg: &LoopConfig) -> Result<Trace> {
    run_language_method(Method::Llm2step, env, agent, dm, cfg)
}

pub fn run_llm_direct(env: &Environment, agent: Arc<dyn Agent>, dm: &dyn DecisionMaker, cfg: &LoopConfig) -> Result<Trace> {
    run_language_method(Method::LlmDirect, env, agent, dm, cfg)
}
