//! Proxy models `M^y` and `M^x` from language feedback.

use std::collections::BTreeMap;

use rand::Rng;

use super::common::{choose_pairs, fit_config, fit_pairwise, fit_regression, x_features, y_features, STREAM_FIT_X, STREAM_FIT_Y};
use super::config::LoopConfig;
use super::trace::{PairLabel, UtilityLabel};
use crate::env::Environment;
use crate::error::{LiloError, Result};
use crate::gp::ModelSummary;
use crate::gp::PosteriorModel;
use crate::language::agent::{Agent, Context};
use crate::linalg::Matrix;
use crate::Surrogate;

/// Models and the labels they were fitted on.
pub struct ProxyFit {
    pub my: Surrogate,
    pub mx: Option<Surrogate>,
    pub summary: String,
    pub pair_labels: Vec<PairLabel>,
    pub utility_labels: Vec<UtilityLabel>,
}

impl ProxyFit {
    pub fn summaries(&self) -> BTreeMap<String, ModelSummary> {
        let mut m = BTreeMap::from([("My".to_string(), self.my.summary())]);
        if let Some(mx) = &self.mx {
            m.insert("Mx".to_string(), mx.summary());
        }
        m
    }
}

/// Labels `K` pairs (random without a previous `M^y`, else by the pair
/// strategy) and fits pairwise GPs on outcomes and on inputs.
#[allow(clippy::too_many_arguments)]
pub fn fit_proxy_models_pairwise<R: Rng + ?Sized>(
    env: &Environment,
    agent: &dyn Agent,
    ctx: &Context,
    prev_my: Option<&Surrogate>,
    prev_mx: Option<&Surrogate>,
    cfg: &LoopConfig,
    with_x: bool,
    rng: &mut R,
) -> Result<ProxyFit> {
    let arms = ctx.arms;
    if arms.len() < 2 {
        return Err(LiloError::input("pairwise proxy needs at least two experiments"));
    }
    let strategy = if prev_my.is_none() { crate::acquisition::PairStrategy::Random } else { cfg.pair_strategy };
    let pairs = choose_pairs(env, arms, prev_my, prev_mx, strategy, cfg.n_pairs, rng)?;
    let summary = agent.summarize(ctx)?;
    let mut comps = Vec::new();
    let mut pair_labels = Vec::new();
    for &pair in &pairs {
        match agent.pairwise_pref(ctx, pair, &summary) {
            Ok(v) => {
                comps.extend(v.comparisons());
                pair_labels.push(PairLabel { pair: (arms[pair.0].index.clone(), arms[pair.1].index.clone()), votes: v.votes });
            }
            Err(e @ (LiloError::Parse { .. } | LiloError::Config(_))) => {
                tracing::warn!(trial = ctx.trial, ?pair, "pair dropped: {e}");
            }
            Err(e) => return Err(e),
        }
    }
    if comps.is_empty() {
        return Err(LiloError::ModelFit("every pair failed to label".into()));
    }
    let my = fit_pairwise(&y_features(env, arms), &comps, &fit_config(cfg, STREAM_FIT_Y, ctx.trial))?;
    let mx = if with_x {
        Some(fit_pairwise(&x_features(arms), &comps, &fit_config(cfg, STREAM_FIT_X, ctx.trial))?)
    } else {
        None
    };
    Ok(ProxyFit { my, mx, summary, pair_labels, utility_labels: Vec::new() })
}

/// Scalar estimates for every arm; each replicate is its own training row.
pub fn fit_proxy_models_scalar(
    env: &Environment,
    agent: &dyn Agent,
    ctx: &Context,
    cfg: &LoopConfig,
    with_x: bool,
) -> Result<ProxyFit> {
    let arms = ctx.arms;
    let summary = agent.summarize(ctx)?;
    let est = agent.estimate_utilities(ctx, &summary)?;
    let (yf, xf) = (y_features(env, arms), x_features(arms));
    let rows: Vec<(usize, f64)> = est.iter().enumerate().flat_map(|(i, v)| v.iter().map(move |&u| (i, u))).collect();
    let idx: Vec<usize> = rows.iter().map(|r| r.0).collect();
    let u: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let my = fit_regression(&yf.select_rows(&idx), &u, &fit_config(cfg, STREAM_FIT_Y, ctx.trial))?;
    let mx = if with_x { Some(fit_regression(&xf.select_rows(&idx), &u, &fit_config(cfg, STREAM_FIT_X, ctx.trial))?) } else { None };
    let utility_labels =
        arms.iter().zip(est).map(|(a, values)| UtilityLabel { arm: a.index.clone(), values }).collect();
    Ok(ProxyFit { my, mx, summary, pair_labels: Vec::new(), utility_labels })
}

/// Posterior means of `model` at the rows of `x`.
pub fn means(model: &Surrogate, x: &Matrix<f64>) -> Result<Vec<f64>> {
    Ok(model.posterior(x)?.mean)
}
