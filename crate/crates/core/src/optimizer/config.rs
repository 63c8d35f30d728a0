use serde::{Deserialize, Serialize};

use crate::acquisition::{AcqConfig, PairStrategy};
use crate::error::{LiloError, Result};
use crate::gp::FitConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProxyMode {
    #[default]
    Pairwise,
    Scalar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Lilo,
    LiloScalar,
    TrueUtilityBo,
    PreferentialBo,
    #[serde(rename = "llm-2step")]
    Llm2step,
    LlmDirect,
}

impl Method {
    pub const ALL: [Method; 6] =
        [Self::Lilo, Self::LiloScalar, Self::TrueUtilityBo, Self::PreferentialBo, Self::Llm2step, Self::LlmDirect];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Lilo => "lilo",
            Self::LiloScalar => "lilo-scalar",
            Self::TrueUtilityBo => "true-utility-bo",
            Self::PreferentialBo => "preferential-bo",
            Self::Llm2step => "llm-2step",
            Self::LlmDirect => "llm-direct",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    /// Whether the method talks to a decision maker in language.
    pub fn uses_language(self) -> bool {
        !matches!(self, Self::TrueUtilityBo | Self::PreferentialBo)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    /// T
    pub trials: usize,
    /// B^exp; `None` means the input dimension
    pub batch_size: Option<usize>,
    /// B^pf
    pub feedback_batch: usize,
    /// K
    pub n_pairs: usize,
    pub n_llm_samples: usize,
    pub pair_strategy: PairStrategy,
    pub proxy_mode: ProxyMode,
    pub prior_text: Option<String>,
    pub seed: u64,
    /// raw uniform trial-1 design instead of the scrambled Halton one
    pub uniform_init: bool,
    pub acq: AcqConfig,
    pub fit: FitConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            trials: 8,
            batch_size: None,
            feedback_batch: 2,
            n_pairs: 64,
            n_llm_samples: 5,
            pair_strategy: PairStrategy::EuboY,
            proxy_mode: ProxyMode::Pairwise,
            prior_text: None,
            seed: 0,
            uniform_init: false,
            acq: AcqConfig::default(),
            fit: FitConfig::default(),
        }
    }
}

impl LoopConfig {
    /// Every violated constraint, by field name.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.trials == 0 {
            out.push("trials must be at least 1".to_string());
        }
        if self.batch_size == Some(0) {
            out.push("batch_size must be at least 1".to_string());
        }
        if self.feedback_batch == 0 {
            out.push("feedback_batch must be at least 1".to_string());
        }
        if self.n_pairs == 0 {
            out.push("n_pairs must be at least 1".to_string());
        }
        if self.n_llm_samples == 0 {
            out.push("n_llm_samples must be at least 1".to_string());
        }
        if self.prior_text.as_deref().is_some_and(|p| p.trim().is_empty()) {
            out.push("prior_text must not be empty when set".to_string());
        }
        if let Err(e) = self.acq.validate() {
            out.push(format!("acq: {e}"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(LiloError::config(p.join("; ")))
        }
    }

    pub fn batch_for(&self, dim: usize) -> usize {
        self.batch_size.unwrap_or(dim)
    }
}
