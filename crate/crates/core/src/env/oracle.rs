use serde::{Deserialize, Serialize};

use super::Environment;
use crate::error::{LiloError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnswerMode {
    #[default]
    Pairwise,
    Scalar,
    TemplatedText,
}

/// Decision maker that answers from the ground-truth utility.
#[derive(Clone, Debug)]
pub struct OracleDm {
    pub environment: Environment,
    pub answer_mode: AnswerMode,
}

impl OracleDm {
    pub fn new(environment: Environment, answer_mode: AnswerMode) -> Self {
        Self { environment, answer_mode }
    }

    /// 0 when `y_a` is at least as good as `y_b`, else 1.
    pub fn label(&self, y_a: &[f64], y_b: &[f64]) -> Result<u8> {
        let (ga, gb) = (self.environment.utility(y_a)?, self.environment.utility(y_b)?);
        Ok(u8::from(ga < gb))
    }

    pub fn scalar(&self, y: &[f64]) -> Result<f64> {
        self.environment.utility(y)
    }

    /// One text answer per question, built from the best and worst observed
    /// arms. `arms` pairs an arm index with its outcome vector.
    pub fn answer(&self, questions: &[String], arms: &[(String, Vec<f64>)]) -> Result<Vec<String>> {
        if arms.is_empty() {
            return Ok(vec!["I have not seen any results yet, so I cannot say more than my goal.".to_string(); questions.len()]);
        }
        let mut scored: Vec<(&str, f64)> = arms
            .iter()
            .map(|(a, y)| Ok((a.as_str(), self.environment.utility(y)?)))
            .collect::<Result<_>>()?;
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let (best, worst) = (scored[0], scored[scored.len() - 1]);
        let text = format!(
            "The result I like most so far is arm {} (satisfaction {:.2}) and the one I like least is arm {} (satisfaction {:.2}).",
            best.0, best.1, worst.0, worst.1
        );
        Ok(vec![text; questions.len()])
    }

    pub fn require_mode(&self, mode: AnswerMode) -> Result<()> {
        if self.answer_mode != mode {
            return Err(LiloError::config(format!("oracle configured for {:?}, not {:?}", self.answer_mode, mode)));
        }
        Ok(())
    }
}
