//! Hyperparameter priors, box-constrained L-BFGS and multi-start fitting.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{LiloError, Result};
use crate::linalg::dot;
use crate::scalar::Scalar;

/// Bounds on hyperparameters, in natural units.
pub const LENGTHSCALE_BOUNDS: (f64, f64) = (1e-2, 1e2);
pub const OUTPUT_SCALE_BOUNDS: (f64, f64) = (1e-3, 1e2);
pub const NOISE_BOUNDS: (f64, f64) = (1e-6, 1.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub seed: u64,
    /// log-space standard deviation of the lengthscale prior
    pub lengthscale_prior_sigma: f64,
    pub output_scale_prior_sigma: f64,
    /// Fixes the regression noise variance (standardized scale) instead of
    /// fitting it.
    pub fixed_noise: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_iters: 200,
            grad_tol: 1e-5,
            seed: 0,
            lengthscale_prior_sigma: 1.0,
            output_scale_prior_sigma: 1.0,
            fixed_noise: None,
        }
    }
}

impl FitConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Log-normal prior, evaluated on the log of the parameter (so it is a
/// normal density in the optimizer's coordinates).
#[derive(Clone, Copy, Debug)]
pub struct LogNormalPrior {
    pub median: f64,
    pub sigma: f64,
}

impl LogNormalPrior {
    /// Unnormalized log density and its derivative at `ln v = theta`.
    pub fn log_density<T: Scalar>(&self, theta: T) -> (T, T) {
        let mu = T::lit(self.median.ln());
        let s2 = T::lit(self.sigma * self.sigma);
        let d = theta - mu;
        (-(d * d) / (T::lit(2.0) * s2), -d / s2)
    }
}

/// Kernel priors for a `d`-dimensional RBF-ARD kernel.
pub(crate) fn kernel_priors(d: usize, cfg: &FitConfig) -> (LogNormalPrior, LogNormalPrior) {
    (
        LogNormalPrior { median: 0.5 * (d as f64).sqrt(), sigma: cfg.lengthscale_prior_sigma },
        LogNormalPrior { median: 1.0, sigma: cfg.output_scale_prior_sigma },
    )
}

/// Log-space box for `[ln ℓ₁..ln ℓ_d, ln s]` plus optionally `ln σ²`.
pub(crate) fn log_bounds<T: Scalar>(d: usize, with_noise: bool) -> (Vec<T>, Vec<T>) {
    let mut lo = vec![T::lit(LENGTHSCALE_BOUNDS.0.ln()); d];
    let mut hi = vec![T::lit(LENGTHSCALE_BOUNDS.1.ln()); d];
    lo.push(T::lit(OUTPUT_SCALE_BOUNDS.0.ln()));
    hi.push(T::lit(OUTPUT_SCALE_BOUNDS.1.ln()));
    if with_noise {
        lo.push(T::lit(NOISE_BOUNDS.0.ln()));
        hi.push(T::lit(NOISE_BOUNDS.1.ln()));
    }
    (lo, hi)
}

/// Starting points: the prior median first, then prior draws.
pub(crate) fn start_points<T: Scalar>(d: usize, with_noise: bool, cfg: &FitConfig) -> Vec<Vec<T>> {
    let (ls, os) = kernel_priors(d, cfg);
    let (lo, hi) = log_bounds::<T>(d, with_noise);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ls_dist = Normal::new(ls.median.ln(), ls.sigma.max(1e-12)).expect("valid normal");
    let os_dist = Normal::new(os.median.ln(), os.sigma.max(1e-12)).expect("valid normal");
    let noise_dist = Uniform::new(1e-4f64.ln(), 1e-1f64.ln()).expect("valid uniform");
    let n = cfg.restarts.max(1);
    (0..n)
        .map(|r| {
            let mut theta: Vec<f64> = if r == 0 {
                let mut t = vec![ls.median.ln(); d];
                t.push(os.median.ln());
                if with_noise {
                    t.push(1e-2f64.ln());
                }
                t
            } else {
                let mut t: Vec<f64> = (0..d).map(|_| ls_dist.sample(&mut rng)).collect();
                t.push(os_dist.sample(&mut rng));
                if with_noise {
                    t.push(noise_dist.sample(&mut rng));
                }
                t
            };
            for (i, v) in theta.iter_mut().enumerate() {
                *v = v.clamp(lo[i].to_f64_lossy(), hi[i].to_f64_lossy());
            }
            theta.into_iter().map(T::lit).collect()
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct LbfgsOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub memory: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { max_iters: 200, grad_tol: 1e-5, memory: 10 }
    }
}

#[derive(Clone, Debug)]
pub struct LbfgsOutcome<T> {
    pub x: Vec<T>,
    pub value: T,
    pub initial_value: T,
    pub iterations: usize,
    pub converged: bool,
}

fn project<T: Scalar>(x: &mut [T], lo: &[T], hi: &[T]) {
    for ((v, &l), &h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.max(l).min(h);
    }
}

fn projected_gradient<T: Scalar>(x: &[T], g: &[T], lo: &[T], hi: &[T]) -> Vec<T> {
    x.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((&xi, &gi), (&l, &h))| {
            if (xi <= l && gi > T::zero()) || (xi >= h && gi < T::zero()) {
                T::zero()
            } else {
                gi
            }
        })
        .collect()
}

/// Minimizes `f` over the box `[lo, hi]` with projected L-BFGS and Armijo
/// backtracking. `f` returns the value and gradient; an `Err` during the line
/// search is treated as an infinite value.
pub fn minimize_box<T: Scalar>(
    mut f: impl FnMut(&[T]) -> Result<(T, Vec<T>)>,
    x0: &[T],
    lo: &[T],
    hi: &[T],
    opts: &LbfgsOptions,
) -> Result<LbfgsOutcome<T>> {
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() {
        return Err(LiloError::numerical("objective not finite at the starting point"));
    }
    let initial_value = fx;
    let mut s_hist: Vec<Vec<T>> = Vec::new();
    let mut y_hist: Vec<Vec<T>> = Vec::new();
    let tol = T::lit(opts.grad_tol);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        let pg = projected_gradient(&x, &g, lo, hi);
        if pg.iter().all(|v| v.abs() < tol) {
            converged = true;
            break;
        }
        iterations += 1;

        // two-loop recursion on the projected gradient
        let mut q = pg.clone();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for (s, y) in s_hist.iter().zip(&y_hist).rev() {
            let rho = dot(y, s).recip();
            let a = rho * dot(s, &q);
            for (qi, &yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push((a, rho));
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y);
            for qi in &mut q {
                *qi *= gamma;
            }
        }
        for ((s, y), (a, rho)) in s_hist.iter().zip(&y_hist).zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, &si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut dir: Vec<T> = q.iter().zip(&pg).map(|(&qi, &p)| if p == T::zero() { T::zero() } else { -qi }).collect();
        if dot(&dir, &pg) >= T::zero() {
            s_hist.clear();
            y_hist.clear();
            dir = pg.iter().map(|&p| -p).collect();
        }

        let mut step = if s_hist.is_empty() {
            let m = dir.iter().fold(T::zero(), |a, v| a.max(v.abs()));
            T::one().min(m.recip())
        } else {
            T::one()
        };
        let mut accepted = None;
        for _ in 0..40 {
            let mut xn: Vec<T> = x.iter().zip(&dir).map(|(&xi, &di)| xi + step * di).collect();
            project(&mut xn, lo, hi);
            let dx: Vec<T> = xn.iter().zip(&x).map(|(&a, &b)| a - b).collect();
            if dx.iter().all(|v| *v == T::zero()) {
                break;
            }
            if let Ok((fnew, gnew)) = f(&xn) {
                if fnew.is_finite() && fnew <= fx + T::lit(1e-4) * dot(&g, &dx) {
                    accepted = Some((xn, fnew, gnew, dx));
                    break;
                }
            }
            step *= T::lit(0.5);
        }
        let Some((xn, fnew, gnew, dx)) = accepted else {
            if s_hist.is_empty() {
                break;
            }
            s_hist.clear();
            y_hist.clear();
            continue;
        };
        let dg: Vec<T> = gnew.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&dx, &dg);
        if sy > T::lit(1e-10) * dot(&dx, &dx).sqrt() * dot(&dg, &dg).sqrt() {
            if s_hist.len() == opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(dx);
            y_hist.push(dg);
        }
        x = xn;
        fx = fnew;
        g = gnew;
        debug_assert_eq!(x.len(), n);
    }
    Ok(LbfgsOutcome { x, value: fx, initial_value, iterations, converged })
}

/// Objective values recorded while fitting, in the minimized (negated)
/// sense.
#[derive(Clone, Debug, PartialEq)]
pub struct FitDiagnostics {
    /// objective at each starting point; `None` when it could not be evaluated
    pub start_values: Vec<Option<f64>>,
    pub final_value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs [`minimize_box`] from every start and keeps the lowest value.
/// Starts whose initial evaluation fails are skipped.
pub(crate) fn multi_start<T: Scalar>(
    mut f: impl FnMut(&[T]) -> Result<(T, Vec<T>)>,
    starts: &[Vec<T>],
    lo: &[T],
    hi: &[T],
    opts: &LbfgsOptions,
) -> Result<(LbfgsOutcome<T>, FitDiagnostics)> {
    let mut best: Option<LbfgsOutcome<T>> = None;
    let mut last_err = None;
    let mut start_values = Vec::with_capacity(starts.len());
    for s in starts {
        match minimize_box(&mut f, s, lo, hi, opts) {
            Ok(out) => {
                start_values.push(Some(out.initial_value.to_f64_lossy()));
                if best.as_ref().map_or(true, |b| out.value < b.value) {
                    best = Some(out);
                }
            }
            Err(e) => {
                start_values.push(None);
                last_err = Some(e);
            }
        }
    }
    let best = best.ok_or_else(|| {
        LiloError::ModelFit(format!(
            "all {} hyperparameter restarts failed: {}",
            starts.len(),
            last_err.map(|e| e.to_string()).unwrap_or_default()
        ))
    })?;
    let diag = FitDiagnostics {
        start_values,
        final_value: best.value.to_f64_lossy(),
        iterations: best.iterations,
        converged: best.converged,
    };
    Ok((best, diag))
}
