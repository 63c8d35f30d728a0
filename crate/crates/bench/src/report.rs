//! Aggregation over persisted traces and table output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use lilo_core::optimizer::{Method, Trace};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::run::{Failure, FAILURES_FILE};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    /// sample standard deviation
    pub sd: f64,
    /// standard deviation of the mean
    pub se: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let se = sd / (n as f64).sqrt();
        Some(Self { n, mean, sd, se, ci95_lo: mean - 1.96 * se, ci95_hi: mean + 1.96 * se })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub environment: String,
    pub method: Method,
    pub trial: usize,
    pub max_so_far: Stats,
    pub best_point: Option<Stats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizedCell {
    pub method: Method,
    pub trial: usize,
    pub environments: usize,
    pub mean: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub cells: Vec<Cell>,
    /// max-so-far, min-max standardized within each environment, then
    /// averaged across environments
    pub standardized: Vec<StandardizedCell>,
    pub failures: Vec<Failure>,
}

/// `(v - min) / (max - min)`; a constant input maps to zeros.
pub fn min_max_standardize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values.iter().map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 }).collect()
}

type Curves = BTreeMap<(String, Method), Vec<Trace>>;

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    out.sort();
    Ok(out)
}

/// Traces under `<dir>/<environment>/<method>/rep_*.jsonl`.
pub fn load_traces(dir: &Path) -> Result<Curves> {
    let mut out = Curves::new();
    for env_dir in sorted_entries(dir)?.into_iter().filter(|p| p.is_dir()) {
        let env = env_dir.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        for m_dir in sorted_entries(&env_dir)?.into_iter().filter(|p| p.is_dir()) {
            let name = m_dir.file_name().and_then(|s| s.to_str()).unwrap_or_default();
            let method = Method::parse(name).ok_or_else(|| BenchError::Layout(format!("unknown method directory {name:?}")))?;
            let mut traces = Vec::new();
            for f in sorted_entries(&m_dir)? {
                let fname = f.file_name().and_then(|s| s.to_str()).unwrap_or_default();
                if fname.starts_with("rep_") && fname.ends_with(".jsonl") && !fname.ends_with(".transcript.jsonl") {
                    traces.push(Trace::read_jsonl(&f)?);
                }
            }
            if !traces.is_empty() {
                out.insert((env.clone(), method), traces);
            }
        }
    }
    Ok(out)
}

impl AggregateReport {
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let failures = match fs::read_to_string(dir.join(FAILURES_FILE)) {
            Ok(t) => serde_json::from_str(&t)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        Ok(Self::from_traces(&load_traces(dir)?, failures))
    }

    pub fn from_traces(curves: &Curves, failures: Vec<Failure>) -> Self {
        let mut cells = Vec::new();
        for ((env, method), traces) in curves {
            let t_max = traces.iter().map(|t| t.max_so_far().len()).max().unwrap_or(0);
            for i in 0..t_max {
                let max: Vec<f64> = traces.iter().filter_map(|t| t.max_so_far().get(i).copied()).collect();
                let best: Vec<f64> = traces.iter().filter_map(|t| t.best_point_utilities().get(i).copied().flatten()).collect();
                if let Some(max_so_far) = Stats::of(&max) {
                    cells.push(Cell {
                        environment: env.clone(),
                        method: *method,
                        trial: i + 1,
                        max_so_far,
                        best_point: Stats::of(&best),
                    });
                }
            }
        }
        Self { standardized: standardize(curves), cells, failures }
    }

    pub fn environments(&self) -> Vec<String> {
        let mut e: Vec<String> = self.cells.iter().map(|c| c.environment.clone()).collect();
        e.dedup();
        e
    }

    pub fn cell(&self, env: &str, method: Method, trial: usize) -> Option<&Cell> {
        self.cells.iter().find(|c| c.environment == env && c.method == method && c.trial == trial)
    }
}

fn standardize(curves: &Curves) -> Vec<StandardizedCell> {
    let mut per_env: BTreeMap<&str, Vec<(Method, usize, f64)>> = BTreeMap::new();
    for ((env, method), traces) in curves {
        for t in traces {
            for (i, v) in t.max_so_far().into_iter().enumerate() {
                per_env.entry(env).or_default().push((*method, i + 1, v));
            }
        }
    }
    // (method, trial) -> per-environment means of standardized values
    let mut acc: BTreeMap<(Method, usize), Vec<f64>> = BTreeMap::new();
    for rows in per_env.values() {
        let z = min_max_standardize(&rows.iter().map(|r| r.2).collect::<Vec<_>>());
        let mut env_cells: BTreeMap<(Method, usize), Vec<f64>> = BTreeMap::new();
        for (r, v) in rows.iter().zip(z) {
            env_cells.entry((r.0, r.1)).or_default().push(v);
        }
        for (k, vs) in env_cells {
            acc.entry(k).or_default().push(vs.iter().sum::<f64>() / vs.len() as f64);
        }
    }
    acc.into_iter()
        .map(|((method, trial), ms)| StandardizedCell {
            method,
            trial,
            environments: ms.len(),
            mean: ms.iter().sum::<f64>() / ms.len() as f64,
        })
        .collect()
}

/// One row of `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub environment: String,
    pub method: String,
    pub trial: usize,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
}

pub fn summary_rows(report: &AggregateReport) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for c in &report.cells {
        let metrics = [("max_so_far", Some(c.max_so_far)), ("best_point", c.best_point)];
        for (name, s) in metrics {
            let Some(s) = s else { continue };
            out.push(SummaryRow {
                environment: c.environment.clone(),
                method: c.method.as_str().to_string(),
                trial: c.trial,
                metric: name.to_string(),
                n: s.n,
                mean: s.mean,
                sd: s.sd,
                se: s.se,
                ci95_lo: s.ci95_lo,
                ci95_hi: s.ci95_hi,
            });
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

/// Markdown table of one environment: rows are trials, columns the methods
/// that have data, cells "mean ± sd-of-mean".
pub fn markdown_table(report: &AggregateReport, env: &str) -> String {
    let cells: Vec<&Cell> = report.cells.iter().filter(|c| c.environment == env).collect();
    let mut methods: Vec<Method> = cells.iter().map(|c| c.method).collect();
    methods.sort();
    methods.dedup();
    let trials = cells.iter().map(|c| c.trial).max().unwrap_or(0);
    let mut s = format!("## {env}\n\n| trial |");
    for m in &methods {
        s.push_str(&format!(" {} |", m.as_str()));
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(methods.len()));
    s.push('\n');
    for t in 1..=trials {
        s.push_str(&format!("| {t} |"));
        for &m in &methods {
            match report.cell(env, m, t) {
                Some(c) => s.push_str(&format!(" {:.2} ± {:.2} |", c.max_so_far.mean, c.max_so_far.se)),
                None => s.push_str(" missing |"),
            }
        }
        s.push('\n');
    }
    s
}

/// Writes `summary.csv` / `standardized.csv` and per-environment markdown
/// tables under `dir`; returns the files written.
pub fn emit_tables(report: &AggregateReport, dir: &Path, formats: &[TableFormat]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if formats.contains(&TableFormat::Csv) {
        let path = dir.join("summary.csv");
        let mut w = csv::Writer::from_path(&path)?;
        for r in summary_rows(report) {
            w.serialize(r)?;
        }
        w.flush()?;
        written.push(path);
        let path = dir.join("standardized.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["method", "trial", "environments", "mean"])?;
        for c in &report.standardized {
            w.write_record([c.method.as_str().to_string(), c.trial.to_string(), c.environments.to_string(), c.mean.to_string()])?;
        }
        w.flush()?;
        written.push(path);
    }
    if formats.contains(&TableFormat::Markdown) {
        for env in report.environments() {
            let path = dir.join(format!("{env}.md"));
            fs::write(&path, markdown_table(report, &env))?;
            written.push(path);
        }
    }
    let path = dir.join("report.json");
    fs::write(&path, serde_json::to_string_pretty(report)?)?;
    written.push(path);
    Ok(written)
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
