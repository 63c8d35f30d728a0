//! Plain data records shared by the loop, the language bridge and the service.

use serde::{Deserialize, Serialize};

/// One evaluated experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    /// `"{trial}_{j}"`
    pub index: String,
    pub trial: usize,
    /// box coordinates
    pub x: Vec<f64>,
    /// unit-cube coordinates
    pub x_unit: Vec<f64>,
    pub y: Vec<f64>,
}

impl Arm {
    pub fn index_for(trial: usize, j: usize) -> String {
        format!("{trial}_{j}")
    }
}

/// One question and the decision maker's answer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

impl QaPair {
    pub fn new(question: impl Into<String>, answer: impl Into<String>) -> Self {
        Self { question: question.into(), answer: answer.into() }
    }
}
