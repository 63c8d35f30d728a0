use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{LiloError, Result};
use crate::scalar::Scalar;

/// Sign convention for the outcomes handed to utilities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dtlz2Sign {
    /// `|f|`, i.e. the usual positive DTLZ2 scale
    #[default]
    Absolute,
    /// `f` as produced, all components non-positive
    Negated,
}

impl Dtlz2Sign {
    pub fn apply<T: Scalar>(self, f: T) -> T {
        match self {
            Self::Absolute => f.abs(),
            Self::Negated => f,
        }
    }
}

/// Negated DTLZ2 with `k` objectives; the distance term runs over the last
/// `d - k + 1` coordinates.
pub fn dtlz2<T: Scalar>(x: &[T], k: usize) -> Result<Vec<T>> {
    let d = x.len();
    if k < 2 || d <= k {
        return Err(LiloError::config(format!("dtlz2 needs d > k >= 2, got d={d}, k={k}")));
    }
    if x.iter().any(|v| !(*v >= T::zero() && *v <= T::one())) {
        return Err(LiloError::input("dtlz2 inputs must lie in [0, 1]"));
    }
    let half = T::lit(0.5);
    let h = x[k - 1..].iter().fold(T::zero(), |acc, &v| acc + (v - half) * (v - half));
    let scale = T::one() + h;
    let angle = |v: T| v * T::lit(FRAC_PI_2);
    let f = (0..k)
        .map(|j| {
            let n_cos = k - 1 - j;
            let mut v = scale;
            for &xi in &x[..n_cos] {
                v *= angle(xi).cos();
            }
            if j > 0 {
                v *= angle(x[n_cos]).sin();
            }
            -v
        })
        .collect();
    Ok(f)
}

/// The distance term `h(x)`.
pub fn dtlz2_distance<T: Scalar>(x: &[T], k: usize) -> T {
    let half = T::lit(0.5);
    x[k - 1..].iter().fold(T::zero(), |acc, &v| acc + (v - half) * (v - half))
}
