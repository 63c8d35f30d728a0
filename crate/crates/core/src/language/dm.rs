use std::collections::BTreeMap;

use super::agent::QUESTION_TEMPERATURE;
use super::backend::Purpose;
use super::client::{CallSpec, LlmClient};
use super::{parse, prompts};
use crate::env::oracle::OracleDm;
use crate::env::Environment;
use crate::error::{LiloError, Result};
use crate::records::Arm;

pub const NO_COMMENT: &str = "no comment";

/// Whoever answers the optimizer's questions.
pub trait DecisionMaker: Send + Sync {
    /// One answer per question. `arms` is everything observed so far.
    fn answer(&self, trial: usize, questions: &[String], arms: &[Arm]) -> Result<Vec<String>>;
}

impl DecisionMaker for OracleDm {
    fn answer(&self, _trial: usize, questions: &[String], arms: &[Arm]) -> Result<Vec<String>> {
        let view: Vec<(String, Vec<f64>)> = arms.iter().map(|a| (a.index.clone(), a.y.clone())).collect();
        OracleDm::answer(self, questions, &view)
    }
}

/// Replays fixed answers in order, cycling.
pub struct ScriptedDm {
    answers: Vec<String>,
    cursor: std::sync::Mutex<usize>,
}

impl ScriptedDm {
    pub fn new(answers: Vec<String>) -> Self {
        Self { answers, cursor: std::sync::Mutex::new(0) }
    }
}

impl DecisionMaker for ScriptedDm {
    fn answer(&self, _trial: usize, questions: &[String], _arms: &[Arm]) -> Result<Vec<String>> {
        if self.answers.is_empty() {
            return Err(LiloError::config("scripted decision maker has no answers"));
        }
        let mut c = self.cursor.lock().expect("cursor poisoned");
        Ok(questions
            .iter()
            .map(|_| {
                let a = self.answers[*c % self.answers.len()].clone();
                *c += 1;
                a
            })
            .collect())
    }
}

/// Decision maker simulated by a chat model that sees the ground-truth
/// utilities of the observed outcomes.
pub struct LlmDm {
    pub client: LlmClient,
    pub environment: Environment,
    pub seed: u64,
}

impl LlmDm {
    pub fn utility_table(&self, arms: &[Arm]) -> Result<String> {
        let mut header = vec!["arm_index".to_string()];
        header.extend(self.environment.outcome_names.iter().cloned());
        header.push("utility".into());
        let rows = arms
            .iter()
            .map(|a| {
                let mut r = vec![a.index.clone()];
                r.extend(a.y.iter().map(|v| prompts::cell(*v)));
                r.push(prompts::cell(self.environment.utility(&a.y)?));
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(prompts::markdown_table(&header, &rows))
    }
}

impl DecisionMaker for LlmDm {
    fn answer(&self, trial: usize, questions: &[String], arms: &[Arm]) -> Result<Vec<String>> {
        let n = questions.len();
        if n == 0 {
            return Ok(Vec::new());
        }
        let questions_str: Vec<String> = questions.iter().enumerate().map(|(i, q)| format!("q{}: {q}", i + 1)).collect();
        let vars = BTreeMap::from([
            ("y_names".to_string(), prompts::py_list(&self.environment.outcome_names)),
            ("utility_func_desc".to_string(), self.environment.utility_description()),
            ("outcomes_markdown".to_string(), self.utility_table(arms)?),
            ("questions_str".to_string(), questions_str.join("\n")),
            ("n_questions".to_string(), n.to_string()),
            ("utility_constraints".to_string(), self.environment.utility_constraints()),
        ]);
        let spec = CallSpec {
            purpose: Purpose::DmAnswers,
            trial,
            prompt: prompts::dm_answers().render(&vars)?,
            temperature: QUESTION_TEMPERATURE,
            seed: self.seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ ((trial as u64) << 24),
            vars: BTreeMap::from([("n_questions".to_string(), n.to_string())]),
        };
        let parsed = match self.client.call(&spec, |t| parse::answers(t, n)) {
            Ok(a) => a,
            Err(LiloError::Parse { message, .. }) => {
                tracing::warn!(trial, "decision-maker answers unparseable, using fallback: {message}");
                vec![None; n]
            }
            Err(e) => return Err(e),
        };
        Ok(parsed
            .into_iter()
            .enumerate()
            .map(|(i, a)| {
                a.unwrap_or_else(|| {
                    tracing::warn!(trial, question = i + 1, "no answer, using fallback");
                    NO_COMMENT.to_string()
                })
            })
            .collect())
    }
}
