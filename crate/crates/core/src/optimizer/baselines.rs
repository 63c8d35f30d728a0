//! Baselines that see exact utilities or exact comparisons instead of
//! language feedback.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::common::{
    acquire, derive_seed, evaluate, fit_config, fit_pairwise, fit_regression, initial_design, max_utility, model_best,
    x_features, y_features, STREAM_FIT_X, STREAM_FIT_Y, STREAM_PAIRS,
};
use super::config::LoopConfig;
use super::proxy::means;
use super::trace::{PairLabel, Trace, TrialRecord, UtilityLabel};
use crate::acquisition::{eubo_moments, rank_pairs, select_top_pairs, PairStrategy};
use crate::env::oracle::{AnswerMode, OracleDm};
use crate::env::Environment;
use crate::error::{LiloError, Result};
use crate::gp::PosteriorModel;
use crate::records::Arm;
use crate::Surrogate;
use std::collections::BTreeMap;

/// Singleton scores: two-point EUBO of each arm against the arm with the
/// largest posterior mean.
pub fn singleton_scores(my: &Surrogate, env: &Environment, arms: &[Arm]) -> Result<Vec<f64>> {
    let post = my.posterior(&y_features(env, arms))?;
    let inc = post.mean.iter().enumerate().fold(0, |b, (i, &v)| if v > post.mean[b] { i } else { b });
    let c = &post.covariance;
    (0..arms.len())
        .map(|i| {
            if i == inc {
                Ok(post.mean[i])
            } else {
                eubo_moments(post.mean[i], post.mean[inc], c[(i, i)], c[(inc, inc)], c[(i, inc)])
            }
        })
        .collect()
}

fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn next_candidates(env: &Environment, cfg: &LoopConfig, mx: Option<&Surrogate>, arms: &[Arm], n: usize) -> Result<Vec<Arm>> {
    let q = cfg.batch_for(env.dim());
    let units = match mx {
        Some(mx) if n > 1 => acquire(mx, arms, cfg, n, q)?,
        _ => initial_design(cfg, env.dim(), q)?,
    };
    evaluate(env, n, &units)
}

/// `M^x` regressed on `M^y` means at every observed arm.
fn input_model(env: &Environment, cfg: &LoopConfig, my: &Surrogate, arms: &[Arm], n: usize) -> Result<Surrogate> {
    let u = means(my, &y_features(env, arms))?;
    fit_regression(&x_features(arms), &u, &fit_config(cfg, STREAM_FIT_X, n))
}

fn finish_record(env: &Environment, arms: &[Arm], my: &Surrogate, mx: &Surrogate, rec: &mut TrialRecord) -> Result<()> {
    rec.max_utility = Some(max_utility(env, arms)?);
    let best = model_best(env, arms, my)?;
    rec.best_arm = Some(arms[best].index.clone());
    rec.best_arm_utility = Some(env.utility(&arms[best].y)?);
    rec.models = BTreeMap::from([("My".to_string(), my.summary()), ("Mx".to_string(), mx.summary())]);
    Ok(())
}

/// BO with `B^pf` exact utility values per trial.
pub fn run_true_utility_bo(env: &Environment, cfg: &LoopConfig) -> Result<Trace> {
    cfg.validate()?;
    env.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_PAIRS, 0));
    let mut arms: Vec<Arm> = Vec::new();
    let mut labeled: Vec<(usize, f64)> = Vec::new();
    let (mut my, mut mx): (Option<Surrogate>, Option<Surrogate>) = (None, None);
    let mut trace = Trace::default();
    for n in 1..=cfg.trials {
        let mut step = || -> Result<TrialRecord> {
            let new = next_candidates(env, cfg, mx.as_ref(), &arms, n)?;
            let utilities = new.iter().map(|a| env.utility(&a.y)).collect::<Result<Vec<_>>>()?;
            arms.extend(new.iter().cloned());
            let k = cfg.feedback_batch.min(arms.len());
            let chosen = match &my {
                None => sample(&mut rng, arms.len(), k).into_vec(),
                Some(m) => top_k(&singleton_scores(m, env, &arms)?, k),
            };
            let mut rec = TrialRecord { trial: n, arms: new, utilities, ..TrialRecord::default() };
            for &i in &chosen {
                let u = env.utility(&arms[i].y)?;
                labeled.push((i, u));
                rec.utility_labels.push(UtilityLabel { arm: arms[i].index.clone(), values: vec![u] });
            }
            let rows: Vec<usize> = labeled.iter().map(|l| l.0).collect();
            let u: Vec<f64> = labeled.iter().map(|l| l.1).collect();
            let m_y = fit_regression(&y_features(env, &arms).select_rows(&rows), &u, &fit_config(cfg, STREAM_FIT_Y, n))?;
            let m_x = input_model(env, cfg, &m_y, &arms, n)?;
            finish_record(env, &arms, &m_y, &m_x, &mut rec)?;
            my = Some(m_y);
            mx = Some(m_x);
            Ok(rec)
        };
        trace.records.push(step().map_err(|e| e.at_trial(n))?);
    }
    Ok(trace)
}

/// BO with `B^pf` exact pairwise comparisons per trial. Pairs compared in
/// earlier trials may be selected again.
pub fn run_preferential_bo(env: &Environment, cfg: &LoopConfig) -> Result<Trace> {
    cfg.validate()?;
    env.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_PAIRS, 0));
    let mut arms: Vec<Arm> = Vec::new();
    let oracle = OracleDm::new(env.clone(), AnswerMode::Pairwise);
    let mut comps: Vec<(usize, usize)> = Vec::new();
    let (mut my, mut mx): (Option<Surrogate>, Option<Surrogate>) = (None, None);
    let mut trace = Trace::default();
    for n in 1..=cfg.trials {
        let mut step = || -> Result<TrialRecord> {
            let new = next_candidates(env, cfg, mx.as_ref(), &arms, n)?;
            let utilities = new.iter().map(|a| env.utility(&a.y)).collect::<Result<Vec<_>>>()?;
            arms.extend(new.iter().cloned());
            if arms.len() < 2 {
                return Err(LiloError::input("preferential BO needs at least two experiments"));
            }
            let items = y_features(env, &arms);
            let pairs = match &my {
                None => select_top_pairs::<f64, _>(None, &items, cfg.feedback_batch, PairStrategy::Random, &mut rng)?,
                Some(m) => {
                    let mut r = rank_pairs(m as &dyn PosteriorModel<f64>, &items)?;
                    r.truncate(cfg.feedback_batch);
                    r
                }
            };
            let mut rec = TrialRecord { trial: n, arms: new, utilities, ..TrialRecord::default() };
            for &(a, b) in &pairs {
                let label = oracle.label(&arms[a].y, &arms[b].y)?;
                comps.push(if label == 0 { (a, b) } else { (b, a) });
                rec.pair_labels.push(PairLabel { pair: (arms[a].index.clone(), arms[b].index.clone()), votes: vec![label] });
            }
            let m_y = fit_pairwise(&items, &comps, &fit_config(cfg, STREAM_FIT_Y, n))?;
            let m_x = input_model(env, cfg, &m_y, &arms, n)?;
            finish_record(env, &arms, &m_y, &m_x, &mut rec)?;
            my = Some(m_y);
            mx = Some(m_x);
            Ok(rec)
        };
        trace.records.push(step().map_err(|e| e.at_trial(n))?);
    }
    Ok(trace)
}
