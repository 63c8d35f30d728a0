use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::backend::Purpose;
use super::client::{CallSpec, LlmClient};
use super::{parse, prompts};
use crate::env::Environment;
use crate::error::{LiloError, Result};
use crate::records::{Arm, QaPair};

pub const QUESTION_TEMPERATURE: f64 = 0.7;
pub const LABEL_TEMPERATURE: f64 = 0.2;

/// What an agent call can see: the experiment table and the feedback so far.
#[derive(Clone, Copy, Debug)]
pub struct Context<'a> {
    pub trial: usize,
    pub x_names: &'a [String],
    pub y_names: &'a [String],
    pub arms: &'a [Arm],
    pub feedback: &'a [QaPair],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelVote {
    /// indices into the context's arms
    pub pair: (usize, usize),
    /// 0: first arm preferred, 1: second arm preferred
    pub votes: Vec<u8>,
    pub reasonings: Vec<String>,
    pub failed: usize,
}

impl LabelVote {
    /// One `(winner, loser)` row per vote.
    pub fn comparisons(&self) -> Vec<(usize, usize)> {
        let (a, b) = self.pair;
        self.votes.iter().map(|&v| if v == 0 { (a, b) } else { (b, a) }).collect()
    }
}

/// The optimizer's language-facing operations.
pub trait Agent: Send + Sync {
    fn init_questions(&self, ctx: &Context, n: usize) -> Result<Vec<String>>;

    /// `highlighted` are arm positions to point the questions at; `None`
    /// drops the highlight sentence.
    fn questions(&self, ctx: &Context, highlighted: Option<&[usize]>, n: usize) -> Result<Vec<String>>;

    /// Empty string when no summary could be obtained.
    fn summarize(&self, ctx: &Context) -> Result<String>;

    fn pairwise_pref(&self, ctx: &Context, pair: (usize, usize), summary: &str) -> Result<LabelVote>;

    /// Replicate estimates in `[0, 1]` per arm, aligned with `ctx.arms`.
    fn estimate_utilities(&self, ctx: &Context, summary: &str) -> Result<Vec<Vec<f64>>>;

    /// Unit-cube candidates from prior knowledge.
    fn init_candidates(&self, ctx: &Context, prior_text: &str, n: usize) -> Result<Vec<Vec<f64>>>;

    /// Unit-cube candidates given per-arm estimated utilities.
    fn candidates_two_step(&self, ctx: &Context, estimates: &[f64], n: usize) -> Result<Vec<Vec<f64>>>;

    /// Unit-cube candidates from the raw table and feedback.
    fn candidates_direct(&self, ctx: &Context, n: usize) -> Result<Vec<Vec<f64>>>;
}

pub fn feedback_text(feedback: &[QaPair]) -> String {
    if feedback.is_empty() {
        return prompts::NO_FEEDBACK.to_string();
    }
    feedback.iter().map(|qa| format!("- Question: {}\n  Answer: {}", qa.question, qa.answer)).collect::<Vec<_>>().join("\n")
}

pub fn summary_block(summary: &str) -> String {
    if summary.trim().is_empty() {
        String::new()
    } else {
        format!("## Summary of the DM's goals:\n{}", summary.trim())
    }
}

/// `arm_index | y...` table.
pub fn outcome_table(ctx: &Context) -> String {
    let mut header = vec!["arm_index".to_string()];
    header.extend(ctx.y_names.iter().cloned());
    let rows: Vec<Vec<String>> = ctx
        .arms
        .iter()
        .map(|a| std::iter::once(a.index.clone()).chain(a.y.iter().map(|v| prompts::cell(*v))).collect())
        .collect();
    prompts::markdown_table(&header, &rows)
}

/// `arm_index | x... | y... [| extra]` table with unit-cube inputs.
pub fn input_outcome_table(ctx: &Context, extra: Option<(&str, &[f64])>) -> String {
    let mut header = vec!["arm_index".to_string()];
    header.extend(ctx.x_names.iter().cloned());
    header.extend(ctx.y_names.iter().cloned());
    if let Some((name, _)) = extra {
        header.push(name.to_string());
    }
    let rows: Vec<Vec<String>> = ctx
        .arms
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut r = vec![a.index.clone()];
            r.extend(a.x_unit.iter().chain(&a.y).map(|v| prompts::cell(*v)));
            if let Some((_, vals)) = extra {
                r.push(prompts::cell(vals[i]));
            }
            r
        })
        .collect();
    prompts::markdown_table(&header, &rows)
}

pub fn pair_table(ctx: &Context, pair: (usize, usize)) -> String {
    let mut header = vec!["option".to_string(), "arm_index".to_string()];
    header.extend(ctx.y_names.iter().cloned());
    let row = |name: &str, a: &Arm| {
        let mut r = vec![name.to_string(), a.index.clone()];
        r.extend(a.y.iter().map(|v| prompts::cell(*v)));
        r
    };
    prompts::markdown_table(&header, &[row("option_0", &ctx.arms[pair.0]), row("option_1", &ctx.arms[pair.1])])
}

fn base_vars(ctx: &Context) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("y_names".to_string(), prompts::py_list(ctx.y_names)),
        ("x_names".to_string(), prompts::py_list(ctx.x_names)),
        ("human_feedback".to_string(), feedback_text(ctx.feedback)),
    ])
}

fn check_pair(ctx: &Context, pair: (usize, usize)) -> Result<()> {
    if pair.0 == pair.1 || pair.0 >= ctx.arms.len() || pair.1 >= ctx.arms.len() {
        return Err(LiloError::input(format!("invalid pair {pair:?} for {} arms", ctx.arms.len())));
    }
    Ok(())
}

/// Clamps each coordinate into `[0, 1]`.
pub fn clamp_unit(points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    points.into_iter().map(|p| p.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub n_samples: usize,
    /// a pair fails when more replicates than this are unparseable
    pub max_failed_replicates: usize,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self { n_samples: 5, max_failed_replicates: 2, seed: 0 }
    }
}

/// Agent backed by a chat model.
pub struct LlmAgent {
    pub client: LlmClient,
    pub cfg: AgentConfig,
}

impl LlmAgent {
    pub fn new(client: LlmClient, cfg: AgentConfig) -> Self {
        Self { client, cfg }
    }

    fn seed(&self, trial: usize, purpose: Purpose, replicate: usize) -> u64 {
        let p = Purpose::ALL.iter().position(|q| *q == purpose).unwrap_or(0) as u64;
        self.cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((trial as u64) << 24) ^ (p << 16) ^ ((replicate as u64) << 3)
    }

    fn spec(&self, ctx: &Context, purpose: Purpose, prompt: String, temperature: f64, replicate: usize) -> CallSpec {
        CallSpec {
            purpose,
            trial: ctx.trial,
            prompt,
            temperature,
            seed: self.seed(ctx.trial, purpose, replicate),
            vars: BTreeMap::new(),
        }
    }

    fn candidates(&self, ctx: &Context, purpose: Purpose, prompt: String, n: usize) -> Result<Vec<Vec<f64>>> {
        let d = ctx.x_names.len();
        let mut spec = self.spec(ctx, purpose, prompt, QUESTION_TEMPERATURE, 0);
        spec.vars.insert("n_candidates".into(), n.to_string());
        spec.vars.insert("dim".into(), d.to_string());
        let pts = self.client.call(&spec, |t| parse::candidates_json(t, n, d))?;
        Ok(clamp_unit(pts))
    }

    fn candidate_vars(ctx: &Context, n: usize) -> Result<BTreeMap<String, String>> {
        if n == 0 {
            return Err(LiloError::input("candidate count must be at least 1"));
        }
        let mut vars = base_vars(ctx);
        vars.insert("n_candidates".into(), n.to_string());
        vars.insert("n".into(), (n - 1).to_string());
        Ok(vars)
    }
}

impl Agent for LlmAgent {
    fn init_questions(&self, ctx: &Context, n: usize) -> Result<Vec<String>> {
        if n == 0 {
            return Err(LiloError::input("question count must be at least 1"));
        }
        let mut vars = base_vars(ctx);
        vars.insert("n_questions".into(), n.to_string());
        let prompt = prompts::init_questions().render(&vars)?;
        let mut spec = self.spec(ctx, Purpose::InitQuestions, prompt, QUESTION_TEMPERATURE, 0);
        spec.vars.insert("n_questions".into(), n.to_string());
        self.client.call(&spec, |t| parse::questions(t, n))
    }

    fn questions(&self, ctx: &Context, highlighted: Option<&[usize]>, n: usize) -> Result<Vec<String>> {
        if n == 0 {
            return Err(LiloError::input("question count must be at least 1"));
        }
        let mut vars = base_vars(ctx);
        vars.insert("n_questions".into(), n.to_string());
        vars.insert("experiment_data".into(), outcome_table(ctx));
        let template = match highlighted {
            Some(h) => {
                if let Some(bad) = h.iter().find(|&&i| i >= ctx.arms.len()) {
                    return Err(LiloError::input(format!("highlighted arm {bad} outside the experiment table")));
                }
                let mut idx = h.to_vec();
                idx.sort_unstable();
                idx.dedup();
                let names: Vec<&str> = idx.iter().map(|&i| ctx.arms[i].index.as_str()).collect();
                vars.insert("selected_outcome_indices".into(), prompts::py_list(&names));
                prompts::questions()
            }
            None => prompts::questions_unguided(),
        };
        let prompt = template.render(&vars)?;
        let mut spec = self.spec(ctx, Purpose::Questions, prompt, QUESTION_TEMPERATURE, 0);
        spec.vars.insert("n_questions".into(), n.to_string());
        self.client.call(&spec, |t| parse::questions(t, n))
    }

    fn summarize(&self, ctx: &Context) -> Result<String> {
        let mut vars = base_vars(ctx);
        vars.insert("experiment_data".into(), outcome_table(ctx));
        let prompt = prompts::summary().render(&vars)?;
        let spec = self.spec(ctx, Purpose::Summary, prompt, LABEL_TEMPERATURE, 0);
        match self.client.call(&spec, parse::summary) {
            Ok(s) => Ok(s),
            Err(LiloError::Parse { message, .. }) => {
                tracing::warn!(trial = ctx.trial, "feedback summary unavailable, continuing without: {message}");
                Ok(String::new())
            }
            Err(e) => Err(e),
        }
    }

    fn pairwise_pref(&self, ctx: &Context, pair: (usize, usize), summary: &str) -> Result<LabelVote> {
        check_pair(ctx, pair)?;
        let mut vars = base_vars(ctx);
        vars.insert("experiment_data".into(), outcome_table(ctx));
        vars.insert("human_feedback_summary".into(), summary_block(summary));
        vars.insert("pair_str".into(), pair_table(ctx, pair));
        let prompt = prompts::pairwise().render(&vars)?;
        let mut vote = LabelVote { pair, votes: Vec::new(), reasonings: Vec::new(), failed: 0 };
        let mut last_err = None;
        for rep in 0..self.cfg.n_samples {
            let mut spec = self.spec(ctx, Purpose::PairwiseLabel, prompt.clone(), LABEL_TEMPERATURE, rep);
            spec.vars.insert("replicate".into(), rep.to_string());
            match self.client.call(&spec, parse::label) {
                Ok((v, r)) => {
                    vote.votes.push(v);
                    vote.reasonings.push(r);
                }
                Err(e @ LiloError::Parse { .. }) => {
                    tracing::warn!(trial = ctx.trial, ?pair, rep, "label replicate failed: {e}");
                    vote.failed += 1;
                    last_err = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        if vote.failed > self.cfg.max_failed_replicates || vote.votes.is_empty() {
            return Err(last_err.unwrap_or_else(|| LiloError::config("no label replicates requested")));
        }
        Ok(vote)
    }

    fn estimate_utilities(&self, ctx: &Context, summary: &str) -> Result<Vec<Vec<f64>>> {
        if ctx.arms.is_empty() {
            return Err(LiloError::input("no experiments to estimate"));
        }
        let mut vars = base_vars(ctx);
        vars.insert("experiment_data".into(), outcome_table(ctx));
        vars.insert("human_feedback_summary".into(), summary_block(summary));
        let ids: Vec<&str> = ctx.arms.iter().map(|a| a.index.as_str()).collect();
        vars.insert("idx0".into(), ids[0].to_string());
        vars.insert("idx1".into(), ids.get(1).unwrap_or(&ids[0]).to_string());
        vars.insert("idxn".into(), ids[ids.len() - 1].to_string());
        let prompt = prompts::scalar_utility().render(&vars)?;
        let mut per_arm: Vec<Vec<f64>> = vec![Vec::new(); ids.len()];
        let mut ok = 0;
        let mut last_err = None;
        for rep in 0..self.cfg.n_samples {
            let mut spec = self.spec(ctx, Purpose::ScalarUtility, prompt.clone(), LABEL_TEMPERATURE, rep);
            spec.vars.insert("replicate".into(), rep.to_string());
            spec.vars.insert("arm_indices".into(), ids.join(","));
            match self.client.call(&spec, parse::scalar_records) {
                Ok(map) => {
                    ok += 1;
                    for (i, id) in ids.iter().enumerate() {
                        if let Some(&p) = map.get(*id) {
                            if !(0.0..=1.0).contains(&p) {
                                tracing::warn!(arm = id, p, "p_accept outside [0, 1], clamped");
                            }
                            per_arm[i].push(p.clamp(0.0, 1.0));
                        }
                    }
                }
                Err(e @ LiloError::Parse { .. }) => {
                    tracing::warn!(trial = ctx.trial, rep, "utility replicate failed: {e}");
                    last_err = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        if ok == 0 {
            return Err(last_err.unwrap_or_else(|| LiloError::config("no utility replicates requested")));
        }
        if let Some(i) = per_arm.iter().position(Vec::is_empty) {
            return Err(LiloError::Parse {
                purpose: Purpose::ScalarUtility.as_str().into(),
                message: format!("arm {} missing from every replicate", ids[i]),
                transcripts: Vec::new(),
            });
        }
        Ok(per_arm)
    }

    fn init_candidates(&self, ctx: &Context, prior_text: &str, n: usize) -> Result<Vec<Vec<f64>>> {
        if prior_text.trim().is_empty() {
            return Err(LiloError::input("prior knowledge text is empty"));
        }
        let mut vars = Self::candidate_vars(ctx, n)?;
        vars.insert("prior_knowledge".into(), prior_text.to_string());
        let prompt = prompts::prior_candidates().render(&vars)?;
        self.candidates(ctx, Purpose::InitCandidates, prompt, n)
    }

    fn candidates_two_step(&self, ctx: &Context, estimates: &[f64], n: usize) -> Result<Vec<Vec<f64>>> {
        if estimates.len() != ctx.arms.len() || ctx.arms.is_empty() {
            return Err(LiloError::input("need one utility estimate per arm"));
        }
        let best = incumbent_index(estimates);
        let mut vars = Self::candidate_vars(ctx, n)?;
        vars.insert("experiment_data".into(), input_outcome_table(ctx, Some(("estimated_utility", estimates))));
        vars.insert("x_star".into(), prompts::num_list(&ctx.arms[best].x_unit));
        vars.insert("u_star".into(), prompts::cell(estimates[best]));
        let prompt = prompts::llm_two_step().render(&vars)?;
        self.candidates(ctx, Purpose::Candidates2step, prompt, n)
    }

    fn candidates_direct(&self, ctx: &Context, n: usize) -> Result<Vec<Vec<f64>>> {
        let mut vars = Self::candidate_vars(ctx, n)?;
        vars.insert("experiment_data".into(), input_outcome_table(ctx, None));
        let prompt = prompts::llm_direct().render(&vars)?;
        self.candidates(ctx, Purpose::CandidatesDirect, prompt, n)
    }
}

/// Position of the largest estimate (first on ties).
pub fn incumbent_index(estimates: &[f64]) -> usize {
    estimates.iter().enumerate().fold(0, |best, (i, &v)| if v > estimates[best] { i } else { best })
}

const ORACLE_QUESTIONS: [&str; 4] = [
    "Which outcomes matter most to you?",
    "Are there outcome levels you would consider unacceptable?",
    "How would you trade a gain in one outcome against a loss in another?",
    "What result would fully satisfy you?",
];

/// Language-free stand-in: labels and utilities come from the ground truth,
/// questions are fixed texts.
pub struct OracleAgent {
    pub environment: Environment,
    pub n_votes: usize,
}

impl OracleAgent {
    pub fn new(environment: Environment) -> Self {
        Self { environment, n_votes: 1 }
    }

    fn generic(n: usize, offset: usize) -> Vec<String> {
        (0..n).map(|i| ORACLE_QUESTIONS[(i + offset) % ORACLE_QUESTIONS.len()].to_string()).collect()
    }

    fn no_candidates() -> LiloError {
        LiloError::config("the oracle agent cannot propose candidates; use a chat backend")
    }
}

impl Agent for OracleAgent {
    fn init_questions(&self, _ctx: &Context, n: usize) -> Result<Vec<String>> {
        Ok(Self::generic(n, 0))
    }

    fn questions(&self, ctx: &Context, highlighted: Option<&[usize]>, n: usize) -> Result<Vec<String>> {
        let mut idx: Vec<usize> = highlighted.unwrap_or(&[]).to_vec();
        idx.sort_unstable();
        idx.dedup();
        if let Some(bad) = idx.iter().find(|&&i| i >= ctx.arms.len()) {
            return Err(LiloError::input(format!("highlighted arm {bad} outside the experiment table")));
        }
        let mut out: Vec<String> = idx
            .chunks(2)
            .filter(|c| c.len() == 2)
            .map(|c| format!("Do you prefer arm {} or arm {}?", ctx.arms[c[0]].index, ctx.arms[c[1]].index))
            .take(n)
            .collect();
        let k = out.len();
        out.extend(Self::generic(n - k, ctx.trial));
        Ok(out)
    }

    fn summarize(&self, _ctx: &Context) -> Result<String> {
        Ok(String::new())
    }

    fn pairwise_pref(&self, ctx: &Context, pair: (usize, usize), _summary: &str) -> Result<LabelVote> {
        check_pair(ctx, pair)?;
        let (ga, gb) = (self.environment.utility(&ctx.arms[pair.0].y)?, self.environment.utility(&ctx.arms[pair.1].y)?);
        let v = u8::from(ga < gb);
        Ok(LabelVote { pair, votes: vec![v; self.n_votes], reasonings: vec![String::new(); self.n_votes], failed: 0 })
    }

    fn estimate_utilities(&self, ctx: &Context, _summary: &str) -> Result<Vec<Vec<f64>>> {
        if ctx.arms.is_empty() {
            return Err(LiloError::input("no experiments to estimate"));
        }
        ctx.arms.iter().map(|a| Ok(vec![self.environment.utility(&a.y)?; self.n_votes])).collect()
    }

    fn init_candidates(&self, _ctx: &Context, _prior: &str, _n: usize) -> Result<Vec<Vec<f64>>> {
        Err(Self::no_candidates())
    }

    fn candidates_two_step(&self, _ctx: &Context, _est: &[f64], _n: usize) -> Result<Vec<Vec<f64>>> {
        Err(Self::no_candidates())
    }

    fn candidates_direct(&self, _ctx: &Context, _n: usize) -> Result<Vec<Vec<f64>>> {
        Err(Self::no_candidates())
    }
}
