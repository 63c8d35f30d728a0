//! Pieces shared by every method: designs, evaluation, features, model
//! fitting, and best-point bookkeeping.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::LoopConfig;
use crate::acquisition::{optimize_acqf, select_top_pairs, PairStrategy};
use crate::env::Environment;
use crate::error::{LiloError, Result};
use crate::gp::{FitConfig, PosteriorModel};
use crate::linalg::Matrix;
use crate::qmc::ScrambledHalton;
use crate::records::Arm;
use crate::space::SearchSpace;
use crate::{PairwiseGp, RegressionGp, Surrogate};

/// Stream-splitting seed for a (purpose, trial) pair.
pub fn derive_seed(seed: u64, stream: u64, trial: usize) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (trial as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const STREAM_INIT: u64 = 1;
pub const STREAM_ACQ: u64 = 2;
pub const STREAM_FIT_Y: u64 = 3;
pub const STREAM_FIT_X: u64 = 4;
pub const STREAM_PAIRS: u64 = 5;

/// Trial-1 design in unit coordinates.
pub fn initial_design(cfg: &LoopConfig, d: usize, n: usize) -> Result<Vec<Vec<f64>>> {
    let seed = derive_seed(cfg.seed, STREAM_INIT, 1);
    if cfg.uniform_init {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect())
    } else {
        let h = ScrambledHalton::new(d, seed)?;
        Ok((0..n as u64).map(|i| h.point(i)).collect())
    }
}

/// Evaluates unit-cube points and wraps them as arms of `trial`.
pub fn evaluate(env: &Environment, trial: usize, units: &[Vec<f64>]) -> Result<Vec<Arm>> {
    units
        .iter()
        .enumerate()
        .map(|(j, u)| {
            if u.len() != env.dim() {
                return Err(LiloError::input(format!("candidate has {} values, expected {}", u.len(), env.dim())));
            }
            let x_unit: Vec<f64> = u.iter().map(|v| v.clamp(0.0, 1.0)).collect();
            let x = env.space.from_unit(&x_unit);
            let y = env.outcomes(&x)?;
            Ok(Arm { index: Arm::index_for(trial, j), trial, x, x_unit, y })
        })
        .collect()
}

/// Outcomes scaled to the unit cube by the environment's outcome bounds.
pub fn y_features(env: &Environment, arms: &[Arm]) -> Matrix<f64> {
    let k = env.n_outcomes();
    Matrix::from_fn(arms.len(), k, |i, j| {
        let (lo, hi) = env.outcome_bounds[j];
        if hi > lo {
            (arms[i].y[j] - lo) / (hi - lo)
        } else {
            0.5
        }
    })
}

pub fn x_features(arms: &[Arm]) -> Matrix<f64> {
    let d = arms.first().map_or(0, |a| a.x_unit.len());
    Matrix::from_fn(arms.len(), d, |i, j| arms[i].x_unit[j])
}

pub fn fit_config(cfg: &LoopConfig, stream: u64, trial: usize) -> FitConfig {
    cfg.fit.clone().with_seed(derive_seed(cfg.seed, stream, trial))
}

pub fn fit_regression(x: &Matrix<f64>, u: &[f64], cfg: &FitConfig) -> Result<Surrogate> {
    RegressionGp::fit(x, u, cfg).map(Surrogate::Regression).map_err(|e| LiloError::ModelFit(e.to_string()))
}

pub fn fit_pairwise(items: &Matrix<f64>, comps: &[(usize, usize)], cfg: &FitConfig) -> Result<Surrogate> {
    if comps.is_empty() {
        return Err(LiloError::ModelFit("no comparisons to fit".into()));
    }
    PairwiseGp::fit(items, comps, cfg).map(Surrogate::Pairwise).map_err(|e| LiloError::ModelFit(e.to_string()))
}

/// Next batch in unit coordinates: log-EI on `mx` over the unit cube.
pub fn acquire(mx: &Surrogate, arms: &[Arm], cfg: &LoopConfig, trial: usize, q: usize) -> Result<Vec<Vec<f64>>> {
    let observed = x_features(arms);
    let space = SearchSpace::unit(observed.ncols());
    let acq = crate::acquisition::AcqConfig { seed: derive_seed(cfg.seed, STREAM_ACQ, trial), ..cfg.acq.clone() };
    Ok(optimize_acqf(mx, &observed, &space, q, &acq)?.to_rows())
}

/// Up to `k` pairs of arm positions for labeling or highlighting.
pub fn choose_pairs<R: Rng + ?Sized>(
    env: &Environment,
    arms: &[Arm],
    my: Option<&Surrogate>,
    mx: Option<&Surrogate>,
    strategy: PairStrategy,
    k: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    match strategy {
        PairStrategy::EuboX => select_top_pairs(mx.map(|m| m as &dyn PosteriorModel<f64>), &x_features(arms), k, strategy, rng),
        _ => select_top_pairs(my.map(|m| m as &dyn PosteriorModel<f64>), &y_features(env, arms), k, strategy, rng),
    }
}

/// Position of the arm with the largest posterior mean under `my`.
pub fn model_best(env: &Environment, arms: &[Arm], my: &Surrogate) -> Result<usize> {
    let mean = my.posterior(&y_features(env, arms))?.mean;
    Ok(mean.iter().enumerate().fold(0, |b, (i, &v)| if v > mean[b] { i } else { b }))
}

/// Running maximum of ground-truth utility over `arms`.
pub fn max_utility(env: &Environment, arms: &[Arm]) -> Result<f64> {
    arms.iter().try_fold(f64::NEG_INFINITY, |m, a| Ok(m.max(env.utility(&a.y)?)))
}
