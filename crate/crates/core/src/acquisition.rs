//! Log expected improvement, EUBO, pair selection and the multi-start
//! acquisition optimizer.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LiloError, Result};
use crate::gp::{CrossCache, GaussianPosterior, PosteriorModel};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::qmc::ScrambledHalton;
use crate::scalar::Scalar;
use crate::space::SearchSpace;
use crate::special::{log_h, norm_cdf, norm_pdf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchStrategy {
    SequentialGreedy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcqConfig {
    pub restarts: usize,
    pub raw_samples: usize,
    pub max_iters: usize,
    pub batch_strategy: BatchStrategy,
    /// finite-difference step as a fraction of each axis width
    pub fd_step: f64,
    pub seed: u64,
}

impl Default for AcqConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            raw_samples: 512,
            max_iters: 100,
            batch_strategy: BatchStrategy::SequentialGreedy,
            fd_step: 1e-3,
            seed: 0,
        }
    }
}

impl AcqConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(LiloError::config("acquisition restarts must be at least 1"));
        }
        if self.raw_samples < self.restarts {
            return Err(LiloError::config("raw_samples must be at least restarts"));
        }
        Ok(())
    }
}

/// `E[max(U - incumbent, 0)]` for `U ~ N(mean, sd²)`, evaluated directly.
pub fn expected_improvement<T: Scalar>(mean: T, sd: T, incumbent: T) -> T {
    if sd <= T::zero() {
        return (mean - incumbent).max(T::zero());
    }
    let z = (mean - incumbent) / sd;
    sd * (norm_pdf(z) + z * norm_cdf(z))
}

/// `ln E[max(U - incumbent, 0)]`, stable for very negative standardized
/// improvement.
pub fn log_ei<T: Scalar>(mean: T, sd: T, incumbent: T) -> Result<T> {
    if sd < T::zero() || sd.is_nan() {
        return Err(LiloError::input("posterior standard deviation must be non-negative"));
    }
    if sd == T::zero() {
        return Ok((mean - incumbent).max(T::zero()).ln());
    }
    let z = (mean - incumbent) / sd;
    Ok(sd.ln() + log_h(z))
}

/// Plug-in noisy incumbent: the best posterior mean over observed inputs.
pub fn incumbent_value<T: Scalar>(model: &dyn PosteriorModel<T>, observed: &Matrix<T>) -> Result<T> {
    if observed.nrows() == 0 {
        return Err(LiloError::input("incumbent needs at least one observed point"));
    }
    let p = model.posterior(observed)?;
    Ok(p.mean.iter().copied().fold(T::neg_infinity(), T::max))
}

/// `E[max(U_a, U_b)]` from the bivariate moments.
pub fn eubo_moments<T: Scalar>(mu_a: T, mu_b: T, var_a: T, var_b: T, cov: T) -> Result<T> {
    let s2 = var_a + var_b - T::lit(2.0) * cov;
    if s2 < T::lit(-1e-10) {
        return Err(LiloError::numerical(format!(
            "negative difference variance {} in EUBO",
            s2.to_f64_lossy()
        )));
    }
    let s = s2.max(T::zero()).sqrt();
    if s <= T::lit(1e-12) {
        return Ok(mu_a.max(mu_b));
    }
    // max + s·h(-|z|), h(u) = φ(u) + uΦ(u) >= 0
    let u = -((mu_a - mu_b) / s).abs();
    let h = (norm_pdf(u) + u * norm_cdf(u)).max(T::zero());
    Ok(mu_a.max(mu_b) + s * h)
}

/// EUBO of a two-point posterior.
pub fn eubo<T: Scalar>(post: &GaussianPosterior<T>) -> Result<T> {
    if post.len() != 2 {
        return Err(LiloError::input(format!("EUBO needs exactly 2 points, got {}", post.len())));
    }
    let c = &post.covariance;
    eubo_moments(post.mean[0], post.mean[1], c[(0, 0)], c[(1, 1)], c[(0, 1)])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairStrategy {
    EuboY,
    EuboX,
    Random,
}

/// All `i < j` pairs in lexicographic order.
pub fn all_pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m).flat_map(|i| ((i + 1)..m).map(move |j| (i, j))).collect()
}

/// EUBO of every unordered pair under the joint posterior of `items`, in
/// lexicographic pair order.
pub fn score_all_pairs<T: Scalar>(model: &dyn PosteriorModel<T>, items: &Matrix<T>) -> Result<Vec<((usize, usize), T)>> {
    let post = model.posterior(items)?;
    let c = &post.covariance;
    all_pairs(items.nrows())
        .into_iter()
        .map(|(i, j)| Ok(((i, j), eubo_moments(post.mean[i], post.mean[j], c[(i, i)], c[(j, j)], c[(i, j)])?)))
        .collect()
}

/// Pairs ranked by EUBO, best first; ties keep lexicographic order.
pub fn rank_pairs<T: Scalar>(model: &dyn PosteriorModel<T>, items: &Matrix<T>) -> Result<Vec<(usize, usize)>> {
    let mut scored = score_all_pairs(model, items)?;
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    Ok(scored.into_iter().map(|(p, _)| p).collect())
}

/// Chooses up to `k` item pairs to label. With no model, or the random
/// strategy, pairs are a uniform sample without replacement.
pub fn select_top_pairs<T: Scalar, R: Rng + ?Sized>(
    model: Option<&dyn PosteriorModel<T>>,
    items: &Matrix<T>,
    k: usize,
    strategy: PairStrategy,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    if k == 0 {
        return Err(LiloError::input("number of pairs must be at least 1"));
    }
    let m = items.nrows();
    if m < 2 {
        return Err(LiloError::input("pair selection needs at least two items"));
    }
    match (model, strategy) {
        (Some(model), PairStrategy::EuboX | PairStrategy::EuboY) => {
            let mut ranked = rank_pairs(model, items)?;
            ranked.truncate(k);
            Ok(ranked)
        }
        _ => {
            let pairs = all_pairs(m);
            let take = k.min(pairs.len());
            Ok(sample(rng, pairs.len(), take).into_iter().map(|i| pairs[i]).collect())
        }
    }
}

/// Posterior after pretending `pending` points were observed at their
/// posterior means with noise `tau2`: means are unchanged, variances shrink.
struct Believer<'a, T: Scalar> {
    model: &'a dyn PosteriorModel<T>,
    pending: Option<(CrossCache<T>, Cholesky<T>)>,
}

impl<'a, T: Scalar> Believer<'a, T> {
    fn new(model: &'a dyn PosteriorModel<T>, pending: &[Vec<T>]) -> Result<Self> {
        if pending.is_empty() {
            return Ok(Self { model, pending: None });
        }
        let d = model.input_dim();
        let rows: Vec<T> = pending.iter().flatten().copied().collect();
        let pts = Matrix::from_vec(pending.len(), d, rows)?;
        let p = model.posterior(&pts)?;
        let tau2 = model.noise_variance().max(T::lit(1e-6) * model.prior_variance());
        let mut s = p.covariance;
        s.add_diagonal(tau2);
        Ok(Self { model, pending: Some((model.cross_cache(&pts)?, Cholesky::with_jitter(&s)?)) })
    }

    fn mean_var(&self, x: &[T]) -> Result<(T, T)> {
        let Some((cache, chol)) = &self.pending else {
            return self.model.mean_var(x);
        };
        let (m, var, c) = self.model.mean_var_cross(x, cache)?;
        let v = chol.solve_lower(&c);
        Ok((m, (var - dot(&v, &v)).max(T::zero())))
    }
}

fn acq_value<T: Scalar>(b: &Believer<'_, T>, x: &[T], incumbent: T) -> Result<T> {
    let (m, v) = b.mean_var(x)?;
    log_ei(m, v.sqrt(), incumbent)
}

/// Maximizes log-EI over `space` for `q` points, building the batch
/// sequentially with the believer update between picks. `observed` are the
/// model's training inputs (for the incumbent). Points are in the model's
/// input coordinates.
pub fn optimize_acqf<T: Scalar>(
    model: &dyn PosteriorModel<T>,
    observed: &Matrix<T>,
    space: &SearchSpace,
    q: usize,
    cfg: &AcqConfig,
) -> Result<Matrix<T>> {
    if q == 0 {
        return Err(LiloError::input("batch size q must be at least 1"));
    }
    cfg.validate()?;
    let d = space.dim();
    if model.input_dim() != d {
        return Err(LiloError::input("model and search space dimensions differ"));
    }
    let incumbent = incumbent_value(model, observed)?;
    let lo: Vec<T> = space.lower.iter().map(|&v| T::lit(v)).collect();
    let hi: Vec<T> = space.upper.iter().map(|&v| T::lit(v)).collect();
    let mut picks: Vec<Vec<T>> = Vec::with_capacity(q);
    for pick in 0..q {
        let believer = Believer::new(model, &picks)?;
        let x = maximize_single(&believer, incumbent, space, &lo, &hi, cfg, pick as u64)?;
        picks.push(x);
    }
    Matrix::from_vec(q, d, picks.into_iter().flatten().collect())
}

fn rank_key<T: Scalar>(v: T) -> T {
    if v.is_nan() {
        T::neg_infinity()
    } else {
        v
    }
}

fn maximize_single<T: Scalar>(
    b: &Believer<'_, T>,
    incumbent: T,
    space: &SearchSpace,
    lo: &[T],
    hi: &[T],
    cfg: &AcqConfig,
    pick: u64,
) -> Result<Vec<T>> {
    let d = space.dim();
    let halton = ScrambledHalton::new(d, cfg.seed.wrapping_mul(0x100_0000_01B3).wrapping_add(pick))?;
    let mut raw: Vec<(Vec<T>, T)> = Vec::with_capacity(cfg.raw_samples);
    for i in 0..cfg.raw_samples {
        let u = halton.point(i as u64);
        let x: Vec<T> = space.from_unit(&u).into_iter().map(T::lit).collect();
        let v = rank_key(acq_value(b, &x, incumbent)?);
        raw.push((x, v));
    }
    // stable: equal values keep sample order
    raw.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    raw.truncate(cfg.restarts);

    let width: Vec<T> = (0..d).map(|i| T::lit(space.width(i))).collect();
    let fd: Vec<T> = width.iter().map(|&w| w * T::lit(cfg.fd_step)).collect();
    let mut best: Option<(Vec<T>, T)> = None;
    for (x0, v0) in raw {
        let (x, v) = ascend(b, incumbent, x0, v0, lo, hi, &width, &fd, cfg.max_iters)?;
        if best.as_ref().map_or(true, |(_, bv)| v > *bv) {
            best = Some((x, v));
        }
    }
    let (x, _) = best.expect("at least one restart");
    Ok(x)
}

/// Projected gradient ascent with forward-difference gradients and an
/// adaptive step length.
#[allow(clippy::too_many_arguments)]
fn ascend<T: Scalar>(
    b: &Believer<'_, T>,
    incumbent: T,
    mut x: Vec<T>,
    mut v: T,
    lo: &[T],
    hi: &[T],
    width: &[T],
    fd: &[T],
    max_iters: usize,
) -> Result<(Vec<T>, T)> {
    let d = x.len();
    let mut step = T::lit(0.05);
    let min_step = T::lit(1e-7);
    if !v.is_finite() {
        return Ok((x, v));
    }
    for _ in 0..max_iters {
        let mut g = vec![T::zero(); d];
        for i in 0..d {
            let mut xp = x.clone();
            // step backwards at the upper bound
            let h = if x[i] + fd[i] <= hi[i] { fd[i] } else { -fd[i] };
            xp[i] = x[i] + h;
            let vp = rank_key(acq_value(b, &xp, incumbent)?);
            g[i] = if vp.is_finite() { (vp - v) / h * width[i] } else { T::zero() };
        }
        let norm = dot(&g, &g).sqrt();
        if !(norm > T::zero()) {
            break;
        }
        let mut improved = false;
        while step >= min_step {
            let xn: Vec<T> = (0..d)
                .map(|i| (x[i] + step * g[i] / norm * width[i]).max(lo[i]).min(hi[i]))
                .collect();
            let vn = rank_key(acq_value(b, &xn, incumbent)?);
            if vn > v {
                x = xn;
                v = vn;
                step *= T::lit(1.5);
                improved = true;
                break;
            }
            step *= T::lit(0.5);
        }
        if !improved {
            break;
        }
    }
    Ok((x, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{Kernel, RegressionGp};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn log_ei_closed_form_points() {
        assert!((log_ei(0.0f64, 1.0, 0.0).unwrap() + 0.918_938_533_204_672_7).abs() < 1e-12);
        assert!(log_ei(1.0f64, 1e-12, 0.0).unwrap().abs() < 1e-9);
        assert_eq!(log_ei(1.0f64, 0.0, 0.0).unwrap(), 0.0);
        assert!(log_ei(0.0f64, -1.0, 0.0).is_err());
    }

    #[test]
    fn log_ei_matches_monte_carlo_in_the_tail() {
        // mean -3, incumbent 0, sd 1
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            let u = -3.0 + z;
            acc += u.max(0.0);
        }
        let mc = acc / n as f64;
        let v = log_ei(-3.0f64, 1.0, 0.0).unwrap().exp();
        assert!(((v - mc) / mc).abs() < 1e-2, "{v} vs {mc}");
    }

    #[test]
    fn log_ei_agrees_with_direct_ei() {
        for i in 0..200 {
            let mean = -4.0 + 0.05 * i as f64;
            for &sd in &[0.1, 0.7, 2.0] {
                let direct = expected_improvement(mean, sd, 0.3f64);
                if direct > 1e-10 {
                    let le = log_ei(mean, sd, 0.3).unwrap().exp();
                    assert!(((le - direct) / direct).abs() < 1e-6, "mean {mean} sd {sd}");
                }
            }
        }
    }

    #[test]
    fn eubo_closed_forms() {
        let v = eubo_moments(0.0f64, 0.0, 1.0, 1.0, 0.0).unwrap();
        assert!((v - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-12);
        assert_eq!(eubo_moments(0.4f64, 0.4, 1.0, 1.0, 1.0).unwrap(), 0.4);
        assert!(eubo_moments(0.0f64, 0.0, 1.0, 1.0, 1.5).is_err());
        // tiny negative clamps
        assert_eq!(eubo_moments(0.2f64, 0.1, 1.0, 1.0, 1.0 + 1e-12).unwrap(), 0.2);
    }

    #[test]
    fn eubo_matches_monte_carlo() {
        let (ma, mb, va, vb, c): (f64, f64, f64, f64, f64) = (0.3, -0.1, 0.5, 0.2, 0.1);
        let l11 = va.sqrt();
        let l21 = c / l11;
        let l22 = (vb - l21 * l21).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            acc += (ma + l11 * z1).max(mb + l21 * z1 + l22 * z2);
        }
        let mc = acc / n as f64;
        assert!((eubo_moments(ma, mb, va, vb, c).unwrap() - mc).abs() < 1e-2);
    }

    fn two_point_model() -> RegressionGp<f64> {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let k = Kernel::rbf_ard(vec![0.15], 1.0).unwrap();
        RegressionGp::with_hyperparameters(&x, &[0.0, 1.0], k, 1e-6).unwrap()
    }

    #[test]
    fn single_candidate_beats_dense_grid() {
        let gp = two_point_model();
        let obs = gp.train_inputs().clone();
        let space = SearchSpace::unit(1);
        let x = optimize_acqf(&gp, &obs, &space, 1, &AcqConfig::default()).unwrap();
        let inc = incumbent_value(&gp, &obs).unwrap();
        let f = |x: f64| {
            let (m, v) = gp.mean_var(&[x]).unwrap();
            log_ei(m, v.sqrt(), inc).unwrap()
        };
        let grid_max = (0..10_000).map(|i| f(i as f64 / 9_999.0)).fold(f64::NEG_INFINITY, f64::max);
        let got = x[(0, 0)];
        assert!(got > 0.5 && got <= 1.0, "candidate {got}");
        assert!(f(got) >= grid_max - 1e-3, "acq {} vs grid {grid_max}", f(got));
    }

    #[test]
    fn batch_points_differ_and_stay_in_bounds() {
        let gp = two_point_model();
        let obs = gp.train_inputs().clone();
        let space = SearchSpace::unit(1);
        let x = optimize_acqf(&gp, &obs, &space, 2, &AcqConfig::default()).unwrap();
        assert_ne!(x.row(0), x.row(1));
        assert!(x.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn believer_keeps_means_and_shrinks_variance() {
        let gp = two_point_model();
        let pending = vec![vec![0.6]];
        let b = Believer::new(&gp, &pending).unwrap();
        for &x in &[0.3, 0.6, 0.8] {
            let (m0, v0) = gp.mean_var(&[x]).unwrap();
            let (m1, v1) = b.mean_var(&[x]).unwrap();
            assert_eq!(m0, m1);
            assert!(v1 <= v0);
        }
        let (_, v_at) = b.mean_var(&[0.6]).unwrap();
        assert!(v_at < 1e-4);
    }

    #[test]
    fn incumbent_is_max_posterior_mean() {
        let gp = two_point_model();
        let obs = Matrix::from_rows(&[[0.2], [0.9], [0.9]]).unwrap();
        let dedup = Matrix::from_rows(&[[0.2], [0.9]]).unwrap();
        let a = incumbent_value(&gp, &obs).unwrap();
        assert_eq!(a, incumbent_value(&gp, &dedup).unwrap());
        assert_eq!(a, gp.mean_var(&[0.9]).unwrap().0);
        assert!(incumbent_value(&gp, &Matrix::zeros(0, 1)).is_err());
    }

    #[test]
    fn pair_selection_edge_cases() {
        let gp = two_point_model();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let two = Matrix::from_rows(&[[0.1], [0.4]]).unwrap();
        for s in [PairStrategy::EuboY, PairStrategy::EuboX, PairStrategy::Random] {
            assert_eq!(select_top_pairs(Some(&gp as &dyn PosteriorModel<f64>), &two, 5, s, &mut rng).unwrap(), vec![(0, 1)]);
        }
        let five = Matrix::from_vec(5, 1, vec![0.0, 0.2, 0.4, 0.6, 0.8]).unwrap();
        let mut p = select_top_pairs(Some(&gp as &dyn PosteriorModel<f64>), &five, 10, PairStrategy::EuboY, &mut rng).unwrap();
        p.sort();
        assert_eq!(p, all_pairs(5));
        assert!(select_top_pairs::<f64, _>(None, &five, 0, PairStrategy::Random, &mut rng).is_err());
    }

    #[test]
    fn no_model_reproduces_seeded_sample() {
        let items = Matrix::from_vec(6, 1, (0..6).map(|i| i as f64).collect()).unwrap();
        let a = select_top_pairs::<f64, _>(None, &items, 4, PairStrategy::EuboY, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = select_top_pairs::<f64, _>(None, &items, 4, PairStrategy::Random, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
    }
}
