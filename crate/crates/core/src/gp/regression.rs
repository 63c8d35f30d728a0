use crate::error::{LiloError, Result};
use crate::gp::hyper::{self, FitConfig, FitDiagnostics, LbfgsOptions};
use crate::gp::kernel::Kernel;
use crate::gp::{CrossCache, GaussianPosterior, ModelSummary, PosteriorModel};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::scalar::Scalar;

/// Exact GP regression with Gaussian noise. Targets are standardized
/// internally; predictions are returned on the original scale.
#[derive(Clone, Debug)]
pub struct RegressionGp<T> {
    kernel: Kernel<T>,
    /// on the standardized scale
    noise_variance: T,
    train_inputs: Matrix<T>,
    train_targets: Vec<T>,
    y_mean: T,
    y_std: T,
    chol: Cholesky<T>,
    alpha: Vec<T>,
    lml: T,
    diagnostics: Option<FitDiagnostics>,
}

struct Standardized<T> {
    y: Vec<T>,
    mean: T,
    std: T,
}

fn standardize<T: Scalar>(u: &[T]) -> Standardized<T> {
    let n = T::from_usize_lossy(u.len());
    let mean = u.iter().copied().sum::<T>() / n;
    let std = if u.len() > 1 {
        let ss: T = u.iter().map(|&v| (v - mean) * (v - mean)).sum();
        (ss / (n - T::one())).sqrt()
    } else {
        T::one()
    };
    let std = if std > T::lit(1e-12) && std.is_finite() { std } else { T::one() };
    Standardized { y: u.iter().map(|&v| (v - mean) / std).collect(), mean, std }
}

fn validate<T: Scalar>(x: &Matrix<T>, u: &[T]) -> Result<()> {
    if x.nrows() == 0 {
        return Err(LiloError::input("regression GP needs at least one training point"));
    }
    if x.nrows() != u.len() {
        return Err(LiloError::input(format!(
            "{} input rows but {} targets",
            x.nrows(),
            u.len()
        )));
    }
    if x.ncols() == 0 {
        return Err(LiloError::input("inputs have zero columns"));
    }
    if !x.is_finite() {
        return Err(LiloError::input("non-finite training input"));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(LiloError::input("non-finite training target"));
    }
    Ok(())
}

/// Negative log posterior of the hyperparameters and its gradient.
/// `theta = [ln ℓ.., ln s, (ln σ²)]`; `fixed_noise` applies when the noise is
/// not part of `theta`.
fn neg_log_posterior<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    theta: &[T],
    fixed_noise: Option<T>,
    cfg: &FitConfig,
) -> Result<(T, Vec<T>)> {
    let d = x.ncols();
    let kernel = Kernel::from_log_params(&theta[..=d])?;
    let noise = match fixed_noise {
        Some(v) => v,
        None => theta[d + 1].exp(),
    };
    let gram = kernel.gram(x);
    let mut k = gram.clone();
    k.add_diagonal(noise);
    let chol = Cholesky::with_jitter(&k)?;
    let alpha = chol.solve(y);
    let n = y.len();
    let lml = -T::lit(0.5) * dot(y, &alpha)
        - T::lit(0.5) * chol.log_det()
        - T::lit(0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln());

    // W = ααᵀ - K⁻¹; ∂lml/∂θ = ½ tr(W ∂K)
    let mut w = chol.inverse();
    w.scale(-T::one());
    for i in 0..n {
        for j in 0..n {
            w[(i, j)] += alpha[i] * alpha[j];
        }
    }
    let half = T::lit(0.5);
    let mut grad: Vec<T> = kernel
        .gram_grads(x, &gram)
        .iter()
        .map(|dk| half * dot(w.as_slice(), dk.as_slice()))
        .collect();
    if fixed_noise.is_none() {
        let tr: T = (0..n).map(|i| w[(i, i)]).sum();
        grad.push(half * noise * tr);
    }

    let (ls_prior, os_prior) = hyper::kernel_priors(d, cfg);
    let mut obj = lml;
    for (t, g) in theta[..d].iter().zip(grad.iter_mut()) {
        let (lp, dlp) = ls_prior.log_density(*t);
        obj += lp;
        *g += dlp;
    }
    let (lp, dlp) = os_prior.log_density(theta[d]);
    obj += lp;
    grad[d] += dlp;

    Ok((-obj, grad.into_iter().map(|g| -g).collect()))
}

impl<T: Scalar> RegressionGp<T> {
    /// Fits kernel hyperparameters and noise by maximizing the log marginal
    /// likelihood plus log-normal kernel priors, with multiple restarts.
    pub fn fit(x: &Matrix<T>, u: &[T], cfg: &FitConfig) -> Result<Self> {
        validate(x, u)?;
        let st = standardize(u);
        let d = x.ncols();
        let fixed_noise = cfg.fixed_noise.map(|v| T::lit(v.clamp(hyper::NOISE_BOUNDS.0, hyper::NOISE_BOUNDS.1)));
        let with_noise = fixed_noise.is_none();
        let (lo, hi) = hyper::log_bounds::<T>(d, with_noise);
        let starts = hyper::start_points::<T>(d, with_noise, cfg);
        let opts = LbfgsOptions { max_iters: cfg.max_iters, grad_tol: cfg.grad_tol, ..Default::default() };
        let (best, diag) = hyper::multi_start(
            |theta| neg_log_posterior(x, &st.y, theta, fixed_noise, cfg),
            &starts,
            &lo,
            &hi,
            &opts,
        )?;
        let kernel = Kernel::from_log_params(&best.x[..=d])?;
        let noise = fixed_noise.unwrap_or_else(|| best.x[d + 1].exp());
        let mut gp = Self::assemble(x, u, st, kernel, noise)?;
        gp.diagnostics = Some(diag);
        Ok(gp)
    }

    /// Builds the model with the given hyperparameters; `noise_variance` is
    /// on the standardized target scale.
    pub fn with_hyperparameters(x: &Matrix<T>, u: &[T], kernel: Kernel<T>, noise_variance: T) -> Result<Self> {
        validate(x, u)?;
        if kernel.dim() != x.ncols() {
            return Err(LiloError::input(format!(
                "kernel has {} lengthscales but inputs have {} columns",
                kernel.dim(),
                x.ncols()
            )));
        }
        if !(noise_variance > T::zero()) {
            return Err(LiloError::input("noise variance must be positive"));
        }
        Self::assemble(x, u, standardize(u), kernel, noise_variance)
    }

    fn assemble(x: &Matrix<T>, u: &[T], st: Standardized<T>, kernel: Kernel<T>, noise: T) -> Result<Self> {
        let mut k = kernel.gram(x);
        k.add_diagonal(noise);
        let chol = Cholesky::with_jitter(&k)?;
        let alpha = chol.solve(&st.y);
        let n = u.len();
        let lml = -T::lit(0.5) * dot(&st.y, &alpha)
            - T::lit(0.5) * chol.log_det()
            - T::lit(0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln());
        Ok(Self {
            kernel,
            noise_variance: noise,
            train_inputs: x.clone(),
            train_targets: u.to_vec(),
            y_mean: st.mean,
            y_std: st.std,
            chol,
            alpha,
            lml,
            diagnostics: None,
        })
    }

    pub fn kernel(&self) -> &Kernel<T> {
        &self.kernel
    }

    /// Noise variance on the standardized scale.
    pub fn noise_variance_standardized(&self) -> T {
        self.noise_variance
    }

    pub fn train_inputs(&self) -> &Matrix<T> {
        &self.train_inputs
    }

    pub fn train_targets(&self) -> &[T] {
        &self.train_targets
    }

    /// Hyperparameter-search record; `None` for fixed hyperparameters.
    pub fn diagnostics(&self) -> Option<&FitDiagnostics> {
        self.diagnostics.as_ref()
    }

    /// Log marginal likelihood of the standardized targets.
    pub fn log_marginal_likelihood(&self) -> T {
        self.lml
    }

    fn check_query(&self, q: &Matrix<T>) -> Result<()> {
        if q.ncols() != self.train_inputs.ncols() {
            return Err(LiloError::input(format!(
                "query has {} columns, model expects {}",
                q.ncols(),
                self.train_inputs.ncols()
            )));
        }
        if q.nrows() == 0 {
            return Err(LiloError::input("empty query"));
        }
        Ok(())
    }
}

impl<T: Scalar> PosteriorModel<T> for RegressionGp<T> {
    fn input_dim(&self) -> usize {
        self.train_inputs.ncols()
    }

    fn posterior(&self, q: &Matrix<T>) -> Result<GaussianPosterior<T>> {
        self.check_query(q)?;
        let kx = self.kernel.cross(&self.train_inputs, q);
        let mean: Vec<T> = kx.tr_matvec(&self.alpha).into_iter().map(|m| self.y_mean + self.y_std * m).collect();
        let v = self.chol.solve_lower_mat(&kx);
        let mut cov = self.kernel.gram(q);
        let vtv = v.transpose().matmul(&v);
        let s2 = self.y_std * self.y_std;
        let nq = q.nrows();
        for i in 0..nq {
            for j in 0..nq {
                cov[(i, j)] = (cov[(i, j)] - vtv[(i, j)]) * s2;
            }
        }
        cov.symmetrize();
        for i in 0..nq {
            cov[(i, i)] = cov[(i, i)].max(T::zero());
        }
        Ok(GaussianPosterior { mean, covariance: cov })
    }

    fn mean_var(&self, x: &[T]) -> Result<(T, T)> {
        if x.len() != self.input_dim() {
            return Err(LiloError::input("query dimension mismatch"));
        }
        let k: Vec<T> = self.train_inputs.rows_iter().map(|r| self.kernel.eval(r, x)).collect();
        let mean = self.y_mean + self.y_std * dot(&k, &self.alpha);
        let v = self.chol.solve_lower(&k);
        let var = (self.kernel.output_scale - dot(&v, &v)).max(T::zero()) * self.y_std * self.y_std;
        Ok((mean, var))
    }

    fn cross_cache(&self, others: &Matrix<T>) -> Result<CrossCache<T>> {
        self.check_query(others)?;
        let proj = self.chol.solve_mat(&self.kernel.cross(&self.train_inputs, others));
        Ok(CrossCache { others: others.clone(), proj: Some(proj) })
    }

    fn mean_var_cross(&self, x: &[T], cache: &CrossCache<T>) -> Result<(T, T, Vec<T>)> {
        let Some(proj) = &cache.proj else {
            let q = Matrix::from_vec(1, x.len(), x.to_vec())?.vstack(&cache.others)?;
            let p = self.posterior(&q)?;
            return Ok((p.mean[0], p.variance(0), (1..p.len()).map(|j| p.covariance[(0, j)]).collect()));
        };
        if x.len() != self.input_dim() {
            return Err(LiloError::input("query dimension mismatch"));
        }
        let k: Vec<T> = self.train_inputs.rows_iter().map(|r| self.kernel.eval(r, x)).collect();
        let s2 = self.y_std * self.y_std;
        let mean = self.y_mean + self.y_std * dot(&k, &self.alpha);
        let v = self.chol.solve_lower(&k);
        let var = (self.kernel.output_scale - dot(&v, &v)).max(T::zero()) * s2;
        let cov = (0..cache.others.nrows())
            .map(|j| {
                let kk = (0..k.len()).fold(T::zero(), |s, a| s + k[a] * proj[(a, j)]);
                (self.kernel.eval(x, cache.others.row(j)) - kk) * s2
            })
            .collect();
        Ok((mean, var, cov))
    }

    fn noise_variance(&self) -> T {
        self.noise_variance * self.y_std * self.y_std
    }

    fn prior_variance(&self) -> T {
        self.kernel.output_scale * self.y_std * self.y_std
    }

    fn summary(&self) -> ModelSummary {
        ModelSummary {
            kind: "regression".into(),
            n_train: self.train_inputs.nrows(),
            n_comparisons: None,
            lengthscales: self.kernel.lengthscales.iter().map(|v| v.to_f64_lossy()).collect(),
            output_scale: self.kernel.output_scale.to_f64_lossy(),
            noise_variance: Some(self.noise_variance().to_f64_lossy()),
            log_marginal_likelihood: self.lml.to_f64_lossy(),
        }
    }
}
