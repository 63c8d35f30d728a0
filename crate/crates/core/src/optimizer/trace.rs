use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{LoopConfig, Method};
use crate::error::Result;
use crate::gp::ModelSummary;
use crate::records::{Arm, QaPair};

/// A labeled pair, by arm index; one vote per replicate (0: first wins).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairLabel {
    pub pair: (String, String),
    pub votes: Vec<u8>,
}

/// Utility feedback on one arm; one value per replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityLabel {
    pub arm: String,
    pub values: Vec<f64>,
}

/// One line of a trace. Trial 0 holds the entry-point exchange only.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub arms: Vec<Arm>,
    /// ground-truth utility of each new arm
    pub utilities: Vec<f64>,
    pub highlighted: Vec<String>,
    pub feedback: Vec<QaPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pair_labels: Vec<PairLabel>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub utility_labels: Vec<UtilityLabel>,
    pub models: BTreeMap<String, ModelSummary>,
    /// best ground-truth utility observed so far
    pub max_utility: Option<f64>,
    /// arm chosen by the outcome-space model, and its true utility
    pub best_arm: Option<String>,
    pub best_arm_utility: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<TrialRecord>,
}

impl Trace {
    /// Experiment trials (index >= 1).
    pub fn trials(&self) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(|r| r.trial >= 1)
    }

    pub fn max_so_far(&self) -> Vec<f64> {
        self.trials().filter_map(|r| r.max_utility).collect()
    }

    pub fn best_point_utilities(&self) -> Vec<Option<f64>> {
        self.trials().map(|r| r.best_arm_utility).collect()
    }

    pub fn feedback(&self) -> Vec<QaPair> {
        self.records.iter().flat_map(|r| r.feedback.iter().cloned()).collect()
    }

    pub fn arms(&self) -> Vec<Arm> {
        self.records.iter().flat_map(|r| r.arms.iter().cloned()).collect()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(self.to_jsonl()?.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let records = BufReader::new(File::open(path)?)
            .lines()
            .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
            .map(|l| Ok(serde_json::from_str(&l?)?))
            .collect::<Result<_>>()?;
        Ok(Self { records })
    }
}

/// Companion file describing how a trace was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub method: Method,
    pub environment: String,
    pub seed: u64,
    pub config: LoopConfig,
    pub backend: String,
    pub build: String,
}

impl RunManifest {
    pub fn new(method: Method, environment: &str, config: &LoopConfig, backend: &str) -> Self {
        Self {
            method,
            environment: environment.to_string(),
            seed: config.seed,
            config: config.clone(),
            backend: backend.to_string(),
            build: build_describe().to_string(),
        }
    }
}

/// `git describe` of the build, or the crate version outside a checkout.
pub fn build_describe() -> &'static str {
    match option_env!("LILO_GIT_DESCRIBE") {
        Some(s) if !s.is_empty() => s,
        _ => concat!("v", env!("CARGO_PKG_VERSION")),
    }
}
