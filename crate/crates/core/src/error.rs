use thiserror::Error;

pub type Result<T, E = LiloError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LiloError {
    /// Caller supplied malformed data (shape mismatch, non-finite values, ...).
    #[error("input error: {0}")]
    Input(String),
    /// Inconsistent configuration or environment parameters.
    #[error("configuration error: {0}")]
    Config(String),
    /// Factorization or iterative-solver failure.
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("template error: missing placeholder `{placeholder}` in template `{template}`")]
    Template { template: String, placeholder: String },
    /// Structured output could not be parsed after the retry budget.
    #[error("parse error ({purpose}): {message}")]
    Parse { purpose: String, message: String, transcripts: Vec<String> },
    #[error("backend error: {0}")]
    Backend(String),
    #[error("model fit error: {0}")]
    ModelFit(String),
    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<LiloError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LiloError {
    pub fn input(msg: impl Into<String>) -> Self {
        Self::Input(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Self::Numerical(msg.into())
    }

    pub fn at_trial(self, trial: usize) -> Self {
        match self {
            e @ Self::Trial { .. } => e,
            e => Self::Trial { trial, source: Box::new(e) },
        }
    }
}
