use serde::{Deserialize, Serialize};

use crate::error::{LiloError, Result};
use crate::scalar::Scalar;
use crate::special::beta_cdf;

/// One-sided "smaller is better" band: fully desirable at or below `l`,
/// unacceptable at or above `h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallerBand {
    pub l: f64,
    pub h: f64,
}

/// Two-sided comfort band `[l, h]` inside the tolerated `[l_min, h_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetBand {
    pub l_min: f64,
    pub l: f64,
    pub h: f64,
    pub h_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum UtilitySpec {
    /// `1 - ‖y - y_opt‖₁ / z`, clamped to `[0, 1]`.
    L1 { y_opt: Vec<f64>, z: f64 },
    BetaProducts { alpha: Vec<f64>, beta: Vec<f64> },
    /// Sum of piecewise-linear terms, affinely mapped by `(lower, upper)`
    /// to `[0, 1]` and clamped.
    PiecewiseLinear { beta1: Vec<f64>, beta2: Vec<f64>, t: Vec<f64>, lower: f64, upper: f64 },
    /// Geometric mean of four smaller-is-better desirabilities and one band.
    ThermalDesirability { smaller: Vec<SmallerBand>, floor: TargetBand, s: f64 },
}

pub fn d_small<T: Scalar>(y: T, l: T, h: T, s: T) -> T {
    if y <= l {
        T::one()
    } else if y >= h {
        T::zero()
    } else {
        ((h - y) / (h - l)).powf(s)
    }
}

pub fn d_band<T: Scalar>(t: T, band: &TargetBand, s: T) -> T {
    let l = T::lit;
    if t <= l(band.l_min) || t >= l(band.h_max) {
        T::zero()
    } else if t < l(band.l) {
        ((t - l(band.l_min)) / (l(band.l) - l(band.l_min))).powf(s)
    } else if t > l(band.h) {
        ((l(band.h_max) - t) / (l(band.h_max) - l(band.h))).powf(s)
    } else {
        T::one()
    }
}

/// One piecewise-linear term, continuous at `t` with slope `b1` below and
/// `b2` above.
pub fn piecewise_term<T: Scalar>(y: T, b1: T, b2: T, t: T) -> T {
    if y < t {
        b1 * y + (b2 - b1) * t
    } else {
        b2 * y
    }
}

impl UtilitySpec {
    pub fn validate(&self, k: usize) -> Result<()> {
        let len_ok = |v: &[f64]| v.len() == k;
        match self {
            Self::L1 { y_opt, z } => {
                if !len_ok(y_opt) || !(*z > 0.0) {
                    return Err(LiloError::config("l1 utility needs k target values and z > 0"));
                }
            }
            Self::BetaProducts { alpha, beta } => {
                if !len_ok(alpha) || !len_ok(beta) || alpha.iter().chain(beta).any(|v| !(*v > 0.0)) {
                    return Err(LiloError::config("beta utility needs k positive alpha and beta values"));
                }
            }
            Self::PiecewiseLinear { beta1, beta2, t, lower, upper } => {
                if !len_ok(beta1) || !len_ok(beta2) || !len_ok(t) || !(lower < upper) {
                    return Err(LiloError::config("piecewise utility needs k slopes/thresholds and lower < upper"));
                }
            }
            Self::ThermalDesirability { smaller, floor, s } => {
                if k != 5 || smaller.len() != 4 {
                    return Err(LiloError::config("thermal utility needs 5 outcomes"));
                }
                if smaller.iter().any(|b| !(b.l < b.h)) {
                    return Err(LiloError::config("thermal thresholds need L < H"));
                }
                if !(floor.l_min < floor.l && floor.l <= floor.h && floor.h < floor.h_max) {
                    return Err(LiloError::config("floor band needs l_min < l <= h < h_max"));
                }
                if !(*s >= 1.0) {
                    return Err(LiloError::config("desirability shape needs s >= 1"));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::L1 { y_opt, .. } => y_opt.len(),
            Self::BetaProducts { alpha, .. } => alpha.len(),
            Self::PiecewiseLinear { t, .. } => t.len(),
            Self::ThermalDesirability { .. } => 5,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::L1 { .. } => "l1",
            Self::BetaProducts { .. } => "beta-products",
            Self::PiecewiseLinear { .. } => "piecewise-linear",
            Self::ThermalDesirability { .. } => "thermal-desirability",
        }
    }

    /// Unnormalized piecewise-linear sum; `None` for other kinds.
    pub fn piecewise_raw<T: Scalar>(&self, y: &[T]) -> Option<T> {
        let Self::PiecewiseLinear { beta1, beta2, t, .. } = self else {
            return None;
        };
        Some((0..t.len()).fold(T::zero(), |acc, i| {
            acc + piecewise_term(y[i], T::lit(beta1[i]), T::lit(beta2[i]), T::lit(t[i]))
        }))
    }

    /// Ground-truth utility in `[0, 1]`.
    pub fn eval<T: Scalar>(&self, y: &[T]) -> Result<T> {
        if y.len() != self.dim() {
            return Err(LiloError::config(format!(
                "{} utility expects {} outcomes, got {}",
                self.kind_name(),
                self.dim(),
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(LiloError::input("outcomes must be finite"));
        }
        let unit = |v: T| v.max(T::zero()).min(T::one());
        let u = match self {
            Self::L1 { y_opt, z } => {
                let dist = y.iter().zip(y_opt).fold(T::zero(), |acc, (&a, &b)| acc + (a - T::lit(b)).abs());
                unit(T::one() - dist / T::lit(*z))
            }
            Self::BetaProducts { alpha, beta } => y
                .iter()
                .zip(alpha.iter().zip(beta))
                .fold(T::one(), |acc, (&v, (&a, &b))| acc * beta_cdf(unit(v), T::lit(a), T::lit(b))),
            Self::PiecewiseLinear { lower, upper, .. } => {
                let raw = self.piecewise_raw(y).expect("piecewise kind");
                unit((raw - T::lit(*lower)) / T::lit(upper - lower))
            }
            Self::ThermalDesirability { smaller, floor, s } => {
                let s = T::lit(*s);
                let mut prod = smaller
                    .iter()
                    .zip(y)
                    .fold(T::one(), |acc, (b, &v)| acc * d_small(v, T::lit(b.l), T::lit(b.h), s));
                prod *= d_band(y[4], floor, s);
                prod.powf(T::lit(0.2))
            }
        };
        Ok(u)
    }
}
