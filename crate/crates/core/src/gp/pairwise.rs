//! Probit preference GP (Chu & Ghahramani) with a Laplace approximation.
//!
//! Each comparison `w ≻ l` has likelihood `Φ((f_w - f_l)/√2)`. The negative
//! Hessian of the log likelihood is `W = RᵀR` with one row of `R` per
//! distinct item pair, so all solves go through `B = I + R K Rᵀ`, whose
//! eigenvalues are at least 1. `K` itself is never inverted.

use std::collections::BTreeMap;

use crate::error::{LiloError, Result};
use crate::gp::hyper::{self, FitConfig, FitDiagnostics, LbfgsOptions};
use crate::gp::kernel::Kernel;
use crate::gp::{CrossCache, GaussianPosterior, ModelSummary, PosteriorModel};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::scalar::Scalar;
use crate::special::{inv_mills, log_norm_cdf};

const LATENT_JITTER: f64 = 1e-6;
pub const NEWTON_MAX_ITERS: usize = 100;
pub const NEWTON_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct PairwiseGp<T> {
    kernel: Kernel<T>,
    train_items: Matrix<T>,
    comparisons: Vec<(usize, usize)>,
    laplace_mode: Vec<T>,
    /// `K⁻¹ f̂`, equal to the likelihood gradient at the mode
    alpha: Vec<T>,
    laplace_hessian: Matrix<T>,
    /// `Rᵀ B⁻¹ R = (K + W⁻¹)⁻¹`
    pred_mat: Matrix<T>,
    lml: T,
    newton_iters: usize,
    grad_norm: T,
    diagnostics: Option<FitDiagnostics>,
}

/// Distinct unordered item pairs and the pair of each comparison.
struct PairIndex {
    pairs: Vec<(usize, usize)>,
    comp_pair: Vec<usize>,
}

impl PairIndex {
    fn new(comparisons: &[(usize, usize)]) -> Self {
        let mut map = BTreeMap::new();
        for &(w, l) in comparisons {
            let key = (w.min(l), w.max(l));
            let n = map.len();
            map.entry(key).or_insert(n);
        }
        // stable ordering by pair key
        let mut pairs: Vec<((usize, usize), usize)> = map.into_iter().collect();
        pairs.sort();
        let lookup: BTreeMap<(usize, usize), usize> = pairs.iter().enumerate().map(|(p, (k, _))| (*k, p)).collect();
        let comp_pair = comparisons.iter().map(|&(w, l)| lookup[&(w.min(l), w.max(l))]).collect();
        Self { pairs: pairs.into_iter().map(|(k, _)| k).collect(), comp_pair }
    }
}

/// Likelihood quantities at a latent vector.
struct Terms<T> {
    log_lik: T,
    /// ∇ log p(y | f)
    grad: Vec<T>,
    z: Vec<T>,
    lambda: Vec<T>,
    /// √D per pair
    r: Vec<T>,
}

fn terms<T: Scalar>(f: &[T], comps: &[(usize, usize)], idx: &PairIndex) -> Terms<T> {
    let inv_sqrt2 = T::FRAC_1_SQRT_2();
    let half = T::lit(0.5);
    let mut log_lik = T::zero();
    let mut grad = vec![T::zero(); f.len()];
    let mut d = vec![T::zero(); idx.pairs.len()];
    let mut zs = Vec::with_capacity(comps.len());
    let mut lambdas = Vec::with_capacity(comps.len());
    for (c, &(w, l)) in comps.iter().enumerate() {
        let z = (f[w] - f[l]) * inv_sqrt2;
        let lam = inv_mills(z);
        log_lik += log_norm_cdf(z);
        grad[w] += lam * inv_sqrt2;
        grad[l] -= lam * inv_sqrt2;
        d[idx.comp_pair[c]] += half * lam * (lam + z);
        zs.push(z);
        lambdas.push(lam);
    }
    let r = d.into_iter().map(|v| v.max(T::zero()).sqrt()).collect();
    Terms { log_lik, grad, z: zs, lambda: lambdas, r }
}

/// `R K` (pairs × items) and the Cholesky factor of `B = I + R K Rᵀ`.
fn factor_b<T: Scalar>(k: &Matrix<T>, idx: &PairIndex, r: &[T]) -> Result<(Matrix<T>, Cholesky<T>)> {
    let m = k.nrows();
    let p = idx.pairs.len();
    let mut rk = Matrix::zeros(p, m);
    for (q, &(i, j)) in idx.pairs.iter().enumerate() {
        let row = rk.row_mut(q);
        for (c, v) in row.iter_mut().enumerate() {
            *v = r[q] * (k[(i, c)] - k[(j, c)]);
        }
    }
    let mut b = Matrix::identity(p);
    for a in 0..p {
        for (q, &(i, j)) in idx.pairs.iter().enumerate() {
            b[(a, q)] += r[q] * (rk[(a, i)] - rk[(a, j)]);
        }
    }
    b.symmetrize();
    let chol = Cholesky::with_jitter(&b)?;
    Ok((rk, chol))
}

/// `R v`
fn r_mul<T: Scalar>(idx: &PairIndex, r: &[T], v: &[T]) -> Vec<T> {
    idx.pairs.iter().zip(r).map(|(&(i, j), &s)| s * (v[i] - v[j])).collect()
}

/// `Rᵀ v`
fn rt_mul<T: Scalar>(idx: &PairIndex, r: &[T], v: &[T], m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m];
    for ((&(i, j), &s), &vp) in idx.pairs.iter().zip(r).zip(v) {
        out[i] += s * vp;
        out[j] -= s * vp;
    }
    out
}

struct Laplace<T> {
    f: Vec<T>,
    a: Vec<T>,
    terms: Terms<T>,
    rk: Matrix<T>,
    b_chol: Cholesky<T>,
    lml: T,
    iters: usize,
    grad_norm: T,
}

fn psi<T: Scalar>(t: &Terms<T>, f: &[T], a: &[T]) -> T {
    t.log_lik - T::lit(0.5) * dot(a, f)
}

/// Damped Newton iterations for the posterior mode. `k` includes jitter.
fn laplace_mode<T: Scalar>(
    k: &Matrix<T>,
    comps: &[(usize, usize)],
    idx: &PairIndex,
    warm: Option<&(Vec<T>, Vec<T>)>,
) -> Result<Laplace<T>> {
    let m = k.nrows();
    let (mut f, mut a) = match warm {
        Some((f, a)) if f.len() == m => (f.clone(), a.clone()),
        _ => (vec![T::zero(); m], vec![T::zero(); m]),
    };
    let mut t = terms(&f, comps, idx);
    let mut obj = psi(&t, &f, &a);
    let tol = T::lit(NEWTON_TOL);
    let mut iters = 0;
    loop {
        let gn = t.grad.iter().zip(&a).map(|(&g, &ai)| (g - ai) * (g - ai)).sum::<T>().sqrt();
        if gn <= tol {
            let (rk, b_chol) = factor_b(k, idx, &t.r)?;
            let lml = obj - T::lit(0.5) * b_chol.log_det();
            return Ok(Laplace { f, a, terms: t, rk, b_chol, lml, iters, grad_norm: gn });
        }
        if iters == NEWTON_MAX_ITERS {
            return Err(LiloError::numerical(format!(
                "Laplace Newton iterations did not converge: gradient norm {:.3e} after {} iterations \
                 ({} items, {} comparisons)",
                gn.to_f64_lossy(),
                iters,
                m,
                comps.len()
            )));
        }
        iters += 1;
        let (rk, b_chol) = factor_b(k, idx, &t.r)?;
        // b = W f + ∇, a' = b - Rᵀ B⁻¹ R K b, f' = K a'
        let wf = rt_mul(idx, &t.r, &r_mul(idx, &t.r, &f), m);
        let b: Vec<T> = wf.iter().zip(&t.grad).map(|(&x, &g)| x + g).collect();
        let rkb = rk.matvec(&b);
        let c = b_chol.solve(&rkb);
        let rtc = rt_mul(idx, &t.r, &c, m);
        let a_new: Vec<T> = b.iter().zip(&rtc).map(|(&x, &y)| x - y).collect();
        let f_new = k.matvec(&a_new);

        let mut step = T::one();
        let mut accepted = false;
        for _ in 0..30 {
            let f_t: Vec<T> = f.iter().zip(&f_new).map(|(&o, &n)| o + step * (n - o)).collect();
            let a_t: Vec<T> = a.iter().zip(&a_new).map(|(&o, &n)| o + step * (n - o)).collect();
            let t_t = terms(&f_t, comps, idx);
            let obj_t = psi(&t_t, &f_t, &a_t);
            if obj_t.is_finite() && obj_t >= obj - T::lit(1e-12) * (T::one() + obj.abs()) {
                f = f_t;
                a = a_t;
                t = t_t;
                obj = obj_t;
                accepted = true;
                break;
            }
            step *= T::lit(0.5);
        }
        if !accepted {
            return Err(LiloError::numerical(format!(
                "Laplace Newton step could not improve the objective at iteration {iters} (gradient norm {:.3e})",
                gn.to_f64_lossy()
            )));
        }
    }
}

fn validate<T: Scalar>(items: &Matrix<T>, comparisons: &[(usize, usize)]) -> Result<()> {
    let m = items.nrows();
    if m < 2 {
        return Err(LiloError::input("pairwise GP needs at least two items"));
    }
    if items.ncols() == 0 || !items.is_finite() {
        return Err(LiloError::input("items must have at least one finite column"));
    }
    if comparisons.is_empty() {
        return Err(LiloError::input("pairwise GP needs at least one comparison"));
    }
    for &(w, l) in comparisons {
        if w == l {
            return Err(LiloError::input(format!("item {w} compared with itself")));
        }
        if w >= m || l >= m {
            return Err(LiloError::input(format!("comparison ({w}, {l}) out of range for {m} items")));
        }
    }
    Ok(())
}

fn jittered_gram<T: Scalar>(kernel: &Kernel<T>, items: &Matrix<T>) -> (Matrix<T>, Matrix<T>) {
    let gram = kernel.gram(items);
    let mut k = gram.clone();
    k.add_diagonal(T::lit(LATENT_JITTER));
    (gram, k)
}

/// Negative Laplace log posterior over hyperparameters and its gradient.
fn neg_log_posterior<T: Scalar>(
    items: &Matrix<T>,
    comps: &[(usize, usize)],
    idx: &PairIndex,
    theta: &[T],
    cfg: &FitConfig,
    warm: &mut Option<(Vec<T>, Vec<T>)>,
) -> Result<(T, Vec<T>)> {
    let d = items.ncols();
    let m = items.nrows();
    let kernel = Kernel::from_log_params(theta)?;
    let (gram, k) = jittered_gram(&kernel, items);
    let lap = laplace_mode(&k, comps, idx, warm.as_ref())?;
    *warm = Some((lap.f.clone(), lap.a.clone()));

    let r = &lap.terms.r;
    let p = idx.pairs.len();
    let binv = lap.b_chol.inverse();
    // C = B⁻¹ R K, so Σ = K - (RK)ᵀ C
    let c = lap.b_chol.solve_mat(&lap.rk);
    let sigma = |a: usize, b: usize| -> T {
        let mut s = k[(a, b)];
        for q in 0..p {
            s -= lap.rk[(q, a)] * c[(q, b)];
        }
        s
    };
    let pair_var: Vec<T> = idx
        .pairs
        .iter()
        .map(|&(i, j)| sigma(i, i) + sigma(j, j) - T::lit(2.0) * sigma(i, j))
        .collect();

    // ∂ log|B| / ∂f
    let half = T::lit(0.5);
    let inv_sqrt2 = T::FRAC_1_SQRT_2();
    let mut dlogb_df = vec![T::zero(); m];
    for (ci, &(w, l)) in comps.iter().enumerate() {
        let z = lap.terms.z[ci];
        let lam = lap.terms.lambda[ci];
        let dh = half * (lam - lam * (lam + z) * (T::lit(2.0) * lam + z));
        let coef = dh * pair_var[idx.comp_pair[ci]] * inv_sqrt2;
        dlogb_df[w] += coef;
        dlogb_df[l] -= coef;
    }

    let grad_lik = &lap.terms.grad;
    let mut grad: Vec<T> = kernel
        .gram_grads(items, &gram)
        .iter()
        .map(|dk| {
            let dka = dk.matvec(&lap.a);
            let mut explicit = half * dot(&lap.a, &dka);
            let mut tr = T::zero();
            for (pa, &(ia, ja)) in idx.pairs.iter().enumerate() {
                for (pb, &(ib, jb)) in idx.pairs.iter().enumerate() {
                    let rdr = r[pa] * r[pb] * (dk[(ia, ib)] - dk[(ia, jb)] - dk[(ja, ib)] + dk[(ja, jb)]);
                    tr += binv[(pa, pb)] * rdr;
                }
            }
            explicit -= half * tr;
            // ∂f/∂θ = (I - K Rᵀ B⁻¹ R) ∂K ∇
            let u = dk.matvec(grad_lik);
            let ru = r_mul(idx, r, &u);
            let ctru = c.tr_matvec(&ru);
            let df: Vec<T> = u.iter().zip(&ctru).map(|(&x, &y)| x - y).collect();
            explicit - half * dot(&dlogb_df, &df)
        })
        .collect();

    let (ls_prior, os_prior) = hyper::kernel_priors(d, cfg);
    let mut obj = lap.lml;
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

impl<T: Scalar> PairwiseGp<T> {
    /// Fits the Laplace-approximate model, choosing kernel hyperparameters by
    /// maximizing the approximate marginal likelihood plus log-normal priors.
    pub fn fit(items: &Matrix<T>, comparisons: &[(usize, usize)], cfg: &FitConfig) -> Result<Self> {
        validate(items, comparisons)?;
        let idx = PairIndex::new(comparisons);
        let d = items.ncols();
        let (lo, hi) = hyper::log_bounds::<T>(d, false);
        let starts = hyper::start_points::<T>(d, false, cfg);
        let opts = LbfgsOptions { max_iters: cfg.max_iters, grad_tol: cfg.grad_tol, ..Default::default() };
        let mut warm = None;
        let (best, diag) = hyper::multi_start(
            |theta| neg_log_posterior(items, comparisons, &idx, theta, cfg, &mut warm),
            &starts,
            &lo,
            &hi,
            &opts,
        )?;
        let kernel = Kernel::from_log_params(&best.x)?;
        let mut gp = Self::assemble(items, comparisons, &idx, kernel)?;
        gp.diagnostics = Some(diag);
        Ok(gp)
    }

    /// Finds the Laplace mode for fixed kernel hyperparameters.
    pub fn with_kernel(items: &Matrix<T>, comparisons: &[(usize, usize)], kernel: Kernel<T>) -> Result<Self> {
        validate(items, comparisons)?;
        if kernel.dim() != items.ncols() {
            return Err(LiloError::input("kernel dimension does not match items"));
        }
        let idx = PairIndex::new(comparisons);
        Self::assemble(items, comparisons, &idx, kernel)
    }

    fn assemble(items: &Matrix<T>, comparisons: &[(usize, usize)], idx: &PairIndex, kernel: Kernel<T>) -> Result<Self> {
        let (_, k) = jittered_gram(&kernel, items);
        let lap = laplace_mode(&k, comparisons, idx, None)?;
        let m = items.nrows();
        let p = idx.pairs.len();
        let mut r_dense = Matrix::zeros(p, m);
        for (q, &(i, j)) in idx.pairs.iter().enumerate() {
            r_dense[(q, i)] = lap.terms.r[q];
            r_dense[(q, j)] = -lap.terms.r[q];
        }
        let g = lap.b_chol.solve_mat(&r_dense);
        let rt = r_dense.transpose();
        let mut pred_mat = rt.matmul(&g);
        pred_mat.symmetrize();
        let mut hessian = rt.matmul(&r_dense);
        hessian.symmetrize();
        Ok(Self {
            kernel,
            train_items: items.clone(),
            comparisons: comparisons.to_vec(),
            laplace_mode: lap.f,
            alpha: lap.a,
            laplace_hessian: hessian,
            pred_mat,
            lml: lap.lml,
            newton_iters: lap.iters,
            grad_norm: lap.grad_norm,
            diagnostics: None,
        })
    }

    pub fn kernel(&self) -> &Kernel<T> {
        &self.kernel
    }

    pub fn train_items(&self) -> &Matrix<T> {
        &self.train_items
    }

    pub fn comparisons(&self) -> &[(usize, usize)] {
        &self.comparisons
    }

    /// Posterior mode of the latent utilities at the training items.
    pub fn laplace_mode(&self) -> &[T] {
        &self.laplace_mode
    }

    /// Negative Hessian of the log likelihood at the mode.
    pub fn laplace_hessian(&self) -> &Matrix<T> {
        &self.laplace_hessian
    }

    /// Norm of the penalized log-likelihood gradient at the returned mode.
    pub fn mode_gradient_norm(&self) -> T {
        self.grad_norm
    }

    pub fn newton_iterations(&self) -> usize {
        self.newton_iters
    }

    pub fn log_marginal_likelihood(&self) -> T {
        self.lml
    }

    pub fn diagnostics(&self) -> Option<&FitDiagnostics> {
        self.diagnostics.as_ref()
    }

    fn check_query(&self, q: &Matrix<T>) -> Result<()> {
        if q.ncols() != self.train_items.ncols() {
            return Err(LiloError::input(format!(
                "query has {} columns, model expects {}",
                q.ncols(),
                self.train_items.ncols()
            )));
        }
        if q.nrows() == 0 {
            return Err(LiloError::input("empty query"));
        }
        Ok(())
    }
}

impl<T: Scalar> PosteriorModel<T> for PairwiseGp<T> {
    fn input_dim(&self) -> usize {
        self.train_items.ncols()
    }

    fn posterior(&self, q: &Matrix<T>) -> Result<GaussianPosterior<T>> {
        self.check_query(q)?;
        let ks = self.kernel.cross(&self.train_items, q);
        let mean = ks.tr_matvec(&self.alpha);
        let mk = self.pred_mat.matmul(&ks);
        let mut cov = self.kernel.gram(q);
        let nq = q.nrows();
        for i in 0..nq {
            for j in 0..nq {
                let mut s = T::zero();
                for a in 0..ks.nrows() {
                    s += ks[(a, i)] * mk[(a, j)];
                }
                cov[(i, j)] -= s;
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
        let k: Vec<T> = self.train_items.rows_iter().map(|r| self.kernel.eval(r, x)).collect();
        let mean = dot(&k, &self.alpha);
        let mk = self.pred_mat.matvec(&k);
        let var = (self.kernel.output_scale - dot(&k, &mk)).max(T::zero());
        Ok((mean, var))
    }

    fn cross_cache(&self, others: &Matrix<T>) -> Result<CrossCache<T>> {
        self.check_query(others)?;
        let proj = self.pred_mat.matmul(&self.kernel.cross(&self.train_items, others));
        Ok(CrossCache { others: others.clone(), proj: Some(proj) })
    }

    fn mean_var_cross(&self, x: &[T], cache: &CrossCache<T>) -> Result<(T, T, Vec<T>)> {
        let (mean, var) = self.mean_var(x)?;
        let k: Vec<T> = self.train_items.rows_iter().map(|r| self.kernel.eval(r, x)).collect();
        let cov = match &cache.proj {
            Some(proj) => (0..cache.others.nrows())
                .map(|j| {
                    let kk = (0..k.len()).fold(T::zero(), |s, a| s + k[a] * proj[(a, j)]);
                    self.kernel.eval(x, cache.others.row(j)) - kk
                })
                .collect(),
            None => {
                let q = Matrix::from_vec(1, x.len(), x.to_vec())?.vstack(&cache.others)?;
                let p = self.posterior(&q)?;
                (1..p.len()).map(|j| p.covariance[(0, j)]).collect()
            }
        };
        Ok((mean, var, cov))
    }

    fn noise_variance(&self) -> T {
        T::zero()
    }

    fn prior_variance(&self) -> T {
        self.kernel.output_scale
    }

    fn summary(&self) -> ModelSummary {
        ModelSummary {
            kind: "pairwise".into(),
            n_train: self.train_items.nrows(),
            n_comparisons: Some(self.comparisons.len()),
            lengthscales: self.kernel.lengthscales.iter().map(|v| v.to_f64_lossy()).collect(),
            output_scale: self.kernel.output_scale.to_f64_lossy(),
            noise_variance: None,
            log_marginal_likelihood: self.lml.to_f64_lossy(),
        }
    }
}
