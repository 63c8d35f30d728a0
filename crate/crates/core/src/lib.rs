//! Language-in-the-loop Bayesian optimization.

pub mod acquisition;
pub mod env;
pub mod error;
pub mod gp;
pub mod language;
pub mod linalg;
pub mod optimizer;
pub mod qmc;
pub mod records;
pub mod scalar;
pub mod space;
pub mod special;

pub use error::{LiloError, Result};
pub use scalar::Scalar;
pub use space::SearchSpace;

pub type Matrix = linalg::Matrix<f64>;
pub type RegressionGp = gp::RegressionGp<f64>;
pub type PairwiseGp = gp::PairwiseGp<f64>;
pub type GaussianPosterior = gp::GaussianPosterior<f64>;
pub type Surrogate = gp::Surrogate<f64>;

pub use env::Environment;
