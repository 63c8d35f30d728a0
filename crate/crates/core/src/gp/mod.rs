//! Gaussian-process surrogates behind a common posterior interface.

pub mod hyper;
pub mod kernel;
pub mod pairwise;
pub mod regression;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub use hyper::{FitConfig, FitDiagnostics};
pub use kernel::{Kernel, KernelKind};
pub use pairwise::PairwiseGp;
pub use regression::RegressionGp;

/// Joint Gaussian over `q` query points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPosterior<T> {
    pub mean: Vec<T>,
    pub covariance: Matrix<T>,
}

impl<T: Scalar> GaussianPosterior<T> {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn variance(&self, i: usize) -> T {
        self.covariance[(i, i)]
    }
}

/// Anything that yields a Gaussian posterior over latent values.
pub trait PosteriorModel<T: Scalar>: Send + Sync {
    fn input_dim(&self) -> usize;

    fn posterior(&self, q: &Matrix<T>) -> Result<GaussianPosterior<T>>;

    /// Posterior mean and variance at a single point.
    fn mean_var(&self, x: &[T]) -> Result<(T, T)> {
        let q = Matrix::from_vec(1, x.len(), x.to_vec())?;
        let p = self.posterior(&q)?;
        Ok((p.mean[0], p.variance(0)))
    }

    /// Precomputation for [`PosteriorModel::mean_var_cross`] against a fixed
    /// set of points.
    fn cross_cache(&self, others: &Matrix<T>) -> Result<CrossCache<T>> {
        Ok(CrossCache { others: others.clone(), proj: None })
    }

    /// Mean and variance at `x`, and its posterior covariance with each
    /// cached point.
    fn mean_var_cross(&self, x: &[T], cache: &CrossCache<T>) -> Result<(T, T, Vec<T>)> {
        let q = Matrix::from_vec(1, x.len(), x.to_vec())?.vstack(&cache.others)?;
        let p = self.posterior(&q)?;
        let c = (1..p.len()).map(|j| p.covariance[(0, j)]).collect();
        Ok((p.mean[0], p.variance(0), c))
    }

    /// Observation noise variance in output units; zero for latent-only
    /// models.
    fn noise_variance(&self) -> T;

    fn prior_variance(&self) -> T;

    fn summary(&self) -> ModelSummary;
}

/// Points held fixed across many [`PosteriorModel::mean_var_cross`] calls.
/// `proj` is the model's `M K(X, others)` when it has one.
#[derive(Clone, Debug)]
pub struct CrossCache<T> {
    pub others: Matrix<T>,
    pub proj: Option<Matrix<T>>,
}

/// Either surrogate, so callers can hold `M^x`/`M^y` without boxing.
#[derive(Clone, Debug)]
pub enum Surrogate<T> {
    Regression(RegressionGp<T>),
    Pairwise(PairwiseGp<T>),
}

impl<T: Scalar> PosteriorModel<T> for Surrogate<T> {
    fn input_dim(&self) -> usize {
        match self {
            Self::Regression(m) => m.input_dim(),
            Self::Pairwise(m) => m.input_dim(),
        }
    }

    fn posterior(&self, q: &Matrix<T>) -> Result<GaussianPosterior<T>> {
        match self {
            Self::Regression(m) => m.posterior(q),
            Self::Pairwise(m) => m.posterior(q),
        }
    }

    fn mean_var(&self, x: &[T]) -> Result<(T, T)> {
        match self {
            Self::Regression(m) => m.mean_var(x),
            Self::Pairwise(m) => m.mean_var(x),
        }
    }

    fn cross_cache(&self, others: &Matrix<T>) -> Result<CrossCache<T>> {
        match self {
            Self::Regression(m) => m.cross_cache(others),
            Self::Pairwise(m) => m.cross_cache(others),
        }
    }

    fn mean_var_cross(&self, x: &[T], cache: &CrossCache<T>) -> Result<(T, T, Vec<T>)> {
        match self {
            Self::Regression(m) => m.mean_var_cross(x, cache),
            Self::Pairwise(m) => m.mean_var_cross(x, cache),
        }
    }

    fn noise_variance(&self) -> T {
        match self {
            Self::Regression(m) => m.noise_variance(),
            Self::Pairwise(m) => m.noise_variance(),
        }
    }

    fn prior_variance(&self) -> T {
        match self {
            Self::Regression(m) => m.prior_variance(),
            Self::Pairwise(m) => m.prior_variance(),
        }
    }

    fn summary(&self) -> ModelSummary {
        match self {
            Self::Regression(m) => m.summary(),
            Self::Pairwise(m) => m.summary(),
        }
    }
}

/// Serializable description of a fitted model, recorded in traces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub kind: String,
    pub n_train: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_comparisons: Option<usize>,
    pub lengthscales: Vec<f64>,
    pub output_scale: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_variance: Option<f64>,
    pub log_marginal_likelihood: f64,
}
