use serde::{Deserialize, Serialize};

use crate::error::{LiloError, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    RbfArd,
}

/// Squared-exponential kernel with one lengthscale per input dimension:
/// `k(a, b) = s · exp(-½ Σ (aᵢ - bᵢ)² / ℓᵢ²)`. `output_scale` is the signal
/// variance `s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel<T> {
    pub kind: KernelKind,
    pub lengthscales: Vec<T>,
    pub output_scale: T,
}

impl<T: Scalar> Kernel<T> {
    pub fn rbf_ard(lengthscales: Vec<T>, output_scale: T) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(LiloError::input("kernel needs at least one lengthscale"));
        }
        if lengthscales.iter().any(|l| !(*l > T::zero()) || !l.is_finite()) {
            return Err(LiloError::input("lengthscales must be positive and finite"));
        }
        if !(output_scale > T::zero()) || !output_scale.is_finite() {
            return Err(LiloError::input("output scale must be positive and finite"));
        }
        Ok(Self { kind: KernelKind::RbfArd, lengthscales, output_scale })
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Log-space parameter vector `[ln ℓ₁, …, ln ℓ_d, ln s]`.
    pub fn log_params(&self) -> Vec<T> {
        self.lengthscales
            .iter()
            .chain(std::iter::once(&self.output_scale))
            .map(|v| v.ln())
            .collect()
    }

    pub fn from_log_params(theta: &[T]) -> Result<Self> {
        let (ls, os) = theta.split_at(theta.len() - 1);
        Self::rbf_ard(ls.iter().map(|v| v.exp()).collect(), os[0].exp())
    }

    #[inline]
    pub fn eval(&self, a: &[T], b: &[T]) -> T {
        let half = T::lit(0.5);
        let r2: T = a
            .iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((&x, &y), &l)| {
                let t = (x - y) / l;
                t * t
            })
            .sum();
        self.output_scale * (-half * r2).exp()
    }

    /// Gram matrix on the rows of `x`.
    pub fn gram(&self, x: &Matrix<T>) -> Matrix<T> {
        let n = x.nrows();
        let mut k = Matrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = self.output_scale;
            for j in 0..i {
                let v = self.eval(x.row(i), x.row(j));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// Cross-covariance `K(a, b)`, `a.nrows() × b.nrows()`.
    pub fn cross(&self, a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
        Matrix::from_fn(a.nrows(), b.nrows(), |i, j| self.eval(a.row(i), b.row(j)))
    }

    /// Derivatives of the Gram matrix with respect to the log-space
    /// parameters, in [`Self::log_params`] order. `gram` must be
    /// `self.gram(x)` without jitter.
    pub fn gram_grads(&self, x: &Matrix<T>, gram: &Matrix<T>) -> Vec<Matrix<T>> {
        let n = x.nrows();
        let mut grads: Vec<Matrix<T>> = self
            .lengthscales
            .iter()
            .enumerate()
            .map(|(dim, &l)| {
                let inv_l2 = (l * l).recip();
                let mut g = Matrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..i {
                        let diff = x[(i, dim)] - x[(j, dim)];
                        let v = gram[(i, j)] * diff * diff * inv_l2;
                        g[(i, j)] = v;
                        g[(j, i)] = v;
                    }
                }
                g
            })
            .collect();
        grads.push(gram.clone());
        grads
    }
}
