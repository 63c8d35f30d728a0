//! Special functions: error functions, the standard normal distribution in
//! linear and log space, log-gamma and the regularized incomplete beta
//! function.

use crate::scalar::Scalar;

const MAX_SERIES_TERMS: usize = 500;

/// `2/√π`
fn two_over_sqrt_pi<T: Scalar>() -> T {
    T::FRAC_2_SQRT_PI()
}

/// `(2/√π) Σ 2ⁿ x²ⁿ⁺¹ / (2n+1)!!`, so that `erf(x) = e^{-x²} · series`.
fn erf_series_scaled<T: Scalar>(x: T) -> T {
    let x2 = x * x;
    let two = T::lit(2.0);
    let mut term = x;
    let mut sum = x;
    for n in 1..MAX_SERIES_TERMS {
        term = term * two * x2 / T::from_usize_lossy(2 * n + 1);
        sum += term;
        if term.abs() <= T::epsilon() * sum.abs() {
            break;
        }
    }
    two_over_sqrt_pi::<T>() * sum
}

/// Continued fraction for `erfcx(x)`, valid for `x ≥ 2`.
fn erfcx_cf<T: Scalar>(x: T) -> T {
    // x + (1/2)/(x + 1/(x + (3/2)/(x + ...))), modified Lentz
    let tiny = T::min_positive_value() * T::lit(1e10);
    let mut f = x;
    let mut c = x;
    let mut d = T::zero();
    let half = T::lit(0.5);
    for i in 1..MAX_SERIES_TERMS {
        let a = T::from_usize_lossy(i) * half;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        let delta = c * d;
        f *= delta;
        if (delta - T::one()).abs() <= T::epsilon() {
            break;
        }
    }
    (T::PI().sqrt() * f).recip()
}

/// Scaled complementary error function `e^{x²} erfc(x)`.
pub fn erfcx<T: Scalar>(x: T) -> T {
    if x < T::zero() {
        let two = T::lit(2.0);
        return two * (x * x).exp() - erfcx(-x);
    }
    if x >= T::lit(2.0) {
        erfcx_cf(x)
    } else {
        (x * x).exp() - erf_series_scaled(x)
    }
}

pub fn erfc<T: Scalar>(x: T) -> T {
    if x < T::zero() {
        return T::lit(2.0) - erfc(-x);
    }
    if x >= T::lit(2.0) {
        (-x * x).exp() * erfcx_cf(x)
    } else {
        T::one() - erf(x)
    }
}

pub fn erf<T: Scalar>(x: T) -> T {
    if x.abs() < T::lit(2.0) {
        (-x * x).exp() * erf_series_scaled(x)
    } else {
        x.signum() * (T::one() - erfc(x.abs()))
    }
}

/// Standard normal density.
pub fn norm_pdf<T: Scalar>(z: T) -> T {
    let inv_sqrt_2pi = T::lit(0.398_942_280_401_432_7);
    inv_sqrt_2pi * (-(z * z) * T::lit(0.5)).exp()
}

/// Standard normal CDF.
pub fn norm_cdf<T: Scalar>(z: T) -> T {
    T::lit(0.5) * erfc(-z * T::FRAC_1_SQRT_2())
}

/// `ln Φ(z)`, accurate deep into the lower tail.
pub fn log_norm_cdf<T: Scalar>(z: T) -> T {
    if z < T::lit(-1.0) {
        let u = -z * T::FRAC_1_SQRT_2();
        -(z * z) * T::lit(0.5) + (T::lit(0.5) * erfcx(u)).ln()
    } else {
        // 1 - Φ(z) = Φ(-z), small for large z
        (-T::lit(0.5) * erfc(z * T::FRAC_1_SQRT_2())).ln_1p()
    }
}

/// Inverse Mills ratio `φ(z)/Φ(z)`.
pub fn inv_mills<T: Scalar>(z: T) -> T {
    if z < T::lit(-1.0) {
        // φ/Φ = √(2/π) / erfcx(-z/√2)
        let sqrt_2_over_pi = T::lit(0.797_884_560_802_865_4);
        sqrt_2_over_pi / erfcx(-z * T::FRAC_1_SQRT_2())
    } else {
        norm_pdf(z) / norm_cdf(z)
    }
}

/// `ln(1 - eˣ)` for `x < 0`.
pub fn log1mexp<T: Scalar>(x: T) -> T {
    if x > -T::LN_2() {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// `ln h(z)` with `h(z) = φ(z) + zΦ(z)`, the standardized expected
/// improvement. Stable for arbitrarily negative `z`.
pub fn log_h<T: Scalar>(z: T) -> T {
    let half_ln_2pi = T::lit(0.918_938_533_204_672_8);
    if z > T::lit(-1.0) {
        return (norm_pdf(z) + z * norm_cdf(z)).ln();
    }
    let cutoff = -T::epsilon().sqrt().recip();
    if z > cutoff {
        let half_ln_pi_over_2 = T::lit(0.225_791_352_644_727_43);
        let u = -z * T::FRAC_1_SQRT_2();
        let inner = (erfcx(u) * z.abs()).ln() + half_ln_pi_over_2;
        -(z * z) * T::lit(0.5) - half_ln_2pi + log1mexp(inner)
    } else {
        -(z * z) * T::lit(0.5) - half_ln_2pi - T::lit(2.0) * z.abs().ln()
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos approximation, with reflection below ½).
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    if x < T::lit(0.5) {
        let pi = T::PI();
        return (pi / (pi * x).sin().abs()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut a = T::lit(LANCZOS_COEF[0]);
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        a += T::lit(c) / (x + T::from_usize_lossy(i));
    }
    let t = x + T::lit(LANCZOS_G + 0.5);
    T::lit(0.918_938_533_204_672_8) + (x + T::lit(0.5)) * t.ln() - t + a.ln()
}

/// Continued fraction of the incomplete beta function (modified Lentz).
fn beta_cf<T: Scalar>(a: T, b: T, x: T) -> T {
    let tiny = T::lit(1e-300).max(T::min_positive_value());
    let one = T::one();
    let qab = a + b;
    let qap = a + one;
    let qam = a - one;
    let mut c = one;
    let mut d = one - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = d.recip();
    let mut h = d;
    let tol = T::lit(1e-15).max(T::epsilon());
    for m in 1..=MAX_SERIES_TERMS {
        let m = T::from_usize_lossy(m);
        let m2 = m + m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = one + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        let del = d * c;
        h *= del;
        if (del - one).abs() <= tol {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`, i.e. the CDF of
/// `Beta(a, b)` at `x`. `x` is clamped to `[0, 1]`.
pub fn beta_cdf<T: Scalar>(x: T, a: T, b: T) -> T {
    let one = T::one();
    if x <= T::zero() {
        return T::zero();
    }
    if x >= one {
        return one;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (one - x).ln();
    let front = ln_front.exp();
    if x < (a + one) / (a + b + T::lit(2.0)) {
        front * beta_cf(a, b, x) / a
    } else {
        one - front * beta_cf(b, a, one - x) / b
    }
}
