//! Fanger PMV/PPD and the draught-rate model.

use serde::{Deserialize, Serialize};

use crate::error::{LiloError, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Persona {
    A,
    B,
}

impl Persona {
    /// (clo, met)
    pub fn clothing_and_activity(self) -> (f64, f64) {
        match self {
            Self::A => (0.61, 1.0),
            Self::B => (0.3, 2.0),
        }
    }
}

pub const THERMAL_AXES: [(&str, f64, f64); 8] = [
    ("air_temperature", 18.0, 32.0),
    ("mean_radiant_temperature", 18.0, 34.0),
    ("relative_humidity", 20.0, 80.0),
    ("air_speed", 0.05, 0.5),
    ("turbulence_intensity", 10.0, 60.0),
    ("vertical_temperature_difference", 0.0, 10.0),
    ("radiant_temperature_asymmetry", 0.0, 25.0),
    ("floor_temperature", 14.0, 32.0),
];

pub const THERMAL_METRICS: [&str; 5] = ["PPD", "DR", "dT_vert", "dT_pr", "T_floor"];

const PMV_MAX_ITERS: usize = 150;

/// Predicted mean vote. `vel` is the relative air speed in m/s, `rh` in
/// percent; external work is zero.
pub fn pmv<T: Scalar>(ta: T, tr: T, vel: T, rh: T, met: T, clo: T) -> Result<T> {
    let l = T::lit;
    let pa = rh * l(10.0) * (l(16.6536) - l(4030.183) / (ta + l(235.0))).exp();
    let icl = l(0.155) * clo;
    let m = met * l(58.15);
    let mw = m;
    let fcl = if icl <= l(0.078) { l(1.0) + l(1.29) * icl } else { l(1.05) + l(0.645) * icl };
    let hcf = l(12.1) * vel.sqrt();
    let taa = ta + l(273.0);
    let tra = tr + l(273.0);
    let tcla = taa + (l(35.5) - ta) / (l(3.5) * icl + l(0.1));
    let p1 = icl * fcl;
    let p2 = p1 * l(3.96);
    let p3 = p1 * l(100.0);
    let p4 = p1 * taa;
    let p5 = l(308.7) - l(0.028) * mw + p2 * (tra / l(100.0)).powi(4);
    let mut xn = tcla / l(100.0);
    let mut xf = tcla / l(50.0);
    let mut hc = hcf;
    let mut n = 0;
    while (xn - xf).abs() > l(0.00015) {
        xf = (xf + xn) / l(2.0);
        let hcn = l(2.38) * (l(100.0) * xf - taa).abs().powf(l(0.25));
        hc = hcf.max(hcn);
        xn = (p5 + p4 * hc - p2 * xf.powi(4)) / (l(100.0) + p3 * hc);
        n += 1;
        if n > PMV_MAX_ITERS {
            return Err(LiloError::numerical("clothing temperature iteration did not converge"));
        }
    }
    let tcl = l(100.0) * xn - l(273.0);
    let hl1 = l(3.05e-3) * (l(5733.0) - l(6.99) * mw - pa);
    let hl2 = if mw > l(58.15) { l(0.42) * (mw - l(58.15)) } else { T::zero() };
    let hl3 = l(1.7e-5) * m * (l(5867.0) - pa);
    let hl4 = l(0.0014) * m * (l(34.0) - ta);
    let hl5 = l(3.96) * fcl * (xn.powi(4) - (tra / l(100.0)).powi(4));
    let hl6 = fcl * hc * (tcl - ta);
    let ts = l(0.303) * (l(-0.036) * m).exp() + l(0.028);
    Ok(ts * (mw - hl1 - hl2 - hl3 - hl4 - hl5 - hl6))
}

pub fn ppd<T: Scalar>(pmv: T) -> T {
    let p2 = pmv * pmv;
    T::lit(100.0) - T::lit(95.0) * (T::lit(-0.03353) * p2 * p2 - T::lit(0.2179) * p2).exp()
}

/// Draught rate in percent; `tu` is turbulence intensity in percent.
pub fn draught_rate<T: Scalar>(ta: T, v: T, tu: T) -> T {
    let dt = (T::lit(34.0) - ta).max(T::zero());
    let dv = (v - T::lit(0.05)).max(T::zero());
    if dt == T::zero() || dv == T::zero() {
        return T::zero();
    }
    let dr = dt * dv.powf(T::lit(0.62)) * (T::lit(0.37) * v * tu + T::lit(3.14));
    dr.min(T::lit(100.0))
}

/// `[PPD, DR, dT_vert, dT_pr, T_floor]` for an 8-axis input.
pub fn thermal_outcomes<T: Scalar>(x: &[T], persona: Persona) -> Result<Vec<T>> {
    if x.len() != THERMAL_AXES.len() {
        return Err(LiloError::input(format!("thermal input needs 8 values, got {}", x.len())));
    }
    for (v, (name, lo, hi)) in x.iter().zip(THERMAL_AXES) {
        let tol = 1e-9 * (hi - lo);
        let vf = v.to_f64_lossy();
        if !(vf >= lo - tol && vf <= hi + tol) {
            return Err(LiloError::input(format!("{name} = {vf} outside [{lo}, {hi}]")));
        }
    }
    let (clo, met) = persona.clothing_and_activity();
    let (ta, tr, rh, v, tu) = (x[0], x[1], x[2], x[3], x[4]);
    let vel = v + T::lit(0.3) * (T::lit(met) - T::one());
    let p = pmv(ta, tr, vel, rh, T::lit(met), T::lit(clo))?;
    Ok(vec![ppd(p), draught_rate(ta, v, tu), x[5], x[6], x[7]])
}
