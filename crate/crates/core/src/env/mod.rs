//! Benchmark environments: outcome functions, ground-truth utilities, seed
//! messages and prior-knowledge text.

pub mod dtlz2;
pub mod oracle;
pub mod thermal;
pub mod utility;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LiloError, Result};
use crate::qmc::ScrambledHalton;
use crate::space::SearchSpace;

pub use dtlz2::{dtlz2, Dtlz2Sign};
pub use oracle::{AnswerMode, OracleDm};
pub use thermal::{thermal_outcomes, Persona};
pub use utility::{SmallerBand, TargetBand, UtilitySpec};

/// Number of low-discrepancy samples used to freeze outcome bounds.
pub const BOUNDS_SAMPLES: usize = 1 << 13;
/// Fixed seed for the bounds sample.
pub const BOUNDS_SEED: u64 = 0x5EED_B0D5;

pub const REGISTRY: [&str; 5] = ["dtlz2-l1", "dtlz2-beta", "dtlz2-piecewise", "thermal-a", "thermal-b"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OutcomeFn {
    /// DTLZ2 with `sign` applied, then each metric mapped by `scale` (raw
    /// min, max) onto `[0, 1]`.
    Dtlz2 { k: usize, sign: Dtlz2Sign, scale: Vec<(f64, f64)> },
    Thermal { persona: Persona },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    Point,
    Area,
    Domain,
}

/// Immutable environment record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub id: String,
    pub space: SearchSpace,
    pub outcome_names: Vec<String>,
    pub outcome: OutcomeFn,
    pub utility: UtilitySpec,
    pub seed_message: String,
    /// Per-metric (min, max) of the reported outcomes over the bounds sample.
    pub outcome_bounds: Vec<(f64, f64)>,
}

fn py_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
    format!("[{}]", items.join(", "))
}

fn bounds_sample(space: &SearchSpace) -> Result<Vec<Vec<f64>>> {
    let h = ScrambledHalton::new(space.dim(), BOUNDS_SEED)?;
    Ok((0..BOUNDS_SAMPLES as u64).map(|i| space.from_unit(&h.point(i))).collect())
}

fn column_bounds(rows: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let k = rows[0].len();
    (0..k)
        .map(|j| {
            rows.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[j]), hi.max(r[j])))
        })
        .collect()
}

const DTLZ2_D: usize = 8;
const DTLZ2_K: usize = 4;

fn thermal_spec(persona: Persona) -> UtilitySpec {
    let sb = |l, h| SmallerBand { l, h };
    match persona {
        Persona::A => UtilitySpec::ThermalDesirability {
            smaller: vec![sb(0.0, 30.0), sb(10.0, 35.0), sb(3.0, 9.0), sb(5.0, 22.0)],
            floor: TargetBand { l_min: 16.0, l: 19.0, h: 26.0, h_max: 30.0 },
            s: 1.0,
        },
        Persona::B => UtilitySpec::ThermalDesirability {
            smaller: vec![sb(0.0, 24.0), sb(30.0, 45.0), sb(2.5, 6.0), sb(4.0, 12.0)],
            floor: TargetBand { l_min: 19.0, l: 20.0, h: 23.0, h_max: 25.0 },
            s: 1.0,
        },
    }
}

impl Environment {
    /// Builds a registered environment with the default DTLZ2 sign.
    pub fn from_id(id: &str) -> Result<Self> {
        Self::from_id_with(id, Dtlz2Sign::default())
    }

    pub fn from_id_with(id: &str, sign: Dtlz2Sign) -> Result<Self> {
        match id {
            "dtlz2-l1" => Self::dtlz2_env(id, "l1", sign),
            "dtlz2-beta" => Self::dtlz2_env(id, "beta", sign),
            "dtlz2-piecewise" => Self::dtlz2_env(id, "piecewise", sign),
            "thermal-a" => Self::thermal_env(id, Persona::A),
            "thermal-b" => Self::thermal_env(id, Persona::B),
            other => Err(LiloError::config(format!("unknown environment id '{other}'"))),
        }
    }

    fn dtlz2_env(id: &str, kind: &str, sign: Dtlz2Sign) -> Result<Self> {
        let names: Vec<String> = (1..=DTLZ2_D).map(|i| format!("x_{i}")).collect();
        let space = SearchSpace::new(names, vec![0.0; DTLZ2_D], vec![1.0; DTLZ2_D])?;
        let xs = bounds_sample(&space)?;
        let raw: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| Ok(dtlz2(x, DTLZ2_K)?.into_iter().map(|v| sign.apply(v)).collect()))
            .collect::<Result<_>>()?;
        let scale = column_bounds(&raw);
        let outcome = OutcomeFn::Dtlz2 { k: DTLZ2_K, sign, scale };
        let mut env = Self {
            id: id.to_string(),
            space,
            outcome_names: (1..=DTLZ2_K).map(|i| format!("y_{i}")).collect(),
            outcome,
            // placeholder, replaced below once outcome bounds are known
            utility: UtilitySpec::L1 { y_opt: vec![0.0; DTLZ2_K], z: 1.0 },
            seed_message: String::new(),
            outcome_bounds: Vec::new(),
        };
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| env.outcomes(x)).collect::<Result<_>>()?;
        env.outcome_bounds = column_bounds(&ys);
        let (utility, message) = match kind {
            "l1" => {
                let y_opt = vec![0.8, 1.0, 0.7, 1.25];
                let z = y_opt
                    .iter()
                    .zip(&env.outcome_bounds)
                    .map(|(o, (lo, hi))| (o - lo).abs().max((hi - o).abs()))
                    .sum();
                let msg = format!("My goal is to bring all the outcome metrics as close to {} as possible.", py_list(&y_opt));
                (UtilitySpec::L1 { y_opt, z }, msg)
            }
            "beta" => (
                UtilitySpec::BetaProducts { alpha: vec![0.5, 2.0, 2.0, 2.0], beta: vec![0.5, 1.0, 2.0, 5.0] },
                "My goal is to bring all the outcome metrics as close to 1 as possible. Results are strongest only when every metric is high -- if any metric is low, it significantly reduces the overall performance.".to_string(),
            ),
            _ => {
                let t = vec![1.0, 0.8, 0.5, 0.5];
                let mut spec = UtilitySpec::PiecewiseLinear {
                    beta1: vec![4.0, 3.0, 2.0, 1.0],
                    beta2: vec![0.4, 0.3, 0.2, 0.1],
                    t: t.clone(),
                    lower: 0.0,
                    upper: 1.0,
                };
                let sums: Vec<f64> = ys.iter().map(|y| spec.piecewise_raw(y).expect("piecewise")).collect();
                let (lo, hi) = sums.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                if let UtilitySpec::PiecewiseLinear { lower, upper, .. } = &mut spec {
                    *lower = lo;
                    *upper = hi;
                }
                let msg = format!(
                    "My goal is to achieve the following thresholds in each outcome {}. Improvements over the thresholds are always good, but less important than bringing the outcomes to their threshold values. The further away an outcome is from its threshold, the higher is its negative impact on the overall performance.",
                    py_list(&t)
                );
                (spec, msg)
            }
        };
        env.utility = utility;
        env.seed_message = message;
        env.validate()?;
        Ok(env)
    }

    fn thermal_env(id: &str, persona: Persona) -> Result<Self> {
        let axes = thermal::THERMAL_AXES;
        let space = SearchSpace::new(
            axes.iter().map(|a| a.0.to_string()).collect(),
            axes.iter().map(|a| a.1).collect(),
            axes.iter().map(|a| a.2).collect(),
        )?;
        let mut env = Self {
            id: id.to_string(),
            space,
            outcome_names: thermal::THERMAL_METRICS.iter().map(|s| s.to_string()).collect(),
            outcome: OutcomeFn::Thermal { persona },
            utility: thermal_spec(persona),
            seed_message: "My goal is to keep all metrics within my thermal comfort preferences.".to_string(),
            outcome_bounds: Vec::new(),
        };
        let ys: Vec<Vec<f64>> = bounds_sample(&env.space)?.iter().map(|x| env.outcomes(x)).collect::<Result<_>>()?;
        env.outcome_bounds = column_bounds(&ys);
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        if self.outcome_names.len() != self.utility.dim() {
            return Err(LiloError::config("outcome names and utility dimension differ"));
        }
        self.utility.validate(self.outcome_names.len())
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn n_outcomes(&self) -> usize {
        self.outcome_names.len()
    }

    /// `y = f(x)` for `x` in box coordinates.
    pub fn outcomes(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(LiloError::input(format!("expected {} inputs, got {}", self.dim(), x.len())));
        }
        match &self.outcome {
            OutcomeFn::Dtlz2 { k, sign, scale } => Ok(dtlz2(x, *k)?
                .into_iter()
                .zip(scale)
                .map(|(v, (lo, hi))| (sign.apply(v) - lo) / (hi - lo))
                .collect()),
            OutcomeFn::Thermal { persona } => thermal_outcomes(x, *persona),
        }
    }

    /// Ground-truth utility `g(y)`.
    pub fn utility(&self, y: &[f64]) -> Result<f64> {
        self.utility.eval(y)
    }

    /// `g(f(x))`.
    pub fn true_utility(&self, x: &[f64]) -> Result<f64> {
        self.utility(&self.outcomes(x)?)
    }

    /// Plain-language description of what the decision maker values; shown
    /// only to the simulated decision maker.
    pub fn utility_description(&self) -> String {
        match &self.utility {
            UtilitySpec::L1 { y_opt, .. } => format!(
                "Your satisfaction decreases linearly with the total absolute deviation of the outcomes from the target {}. All outcomes count equally.",
                py_list(y_opt)
            ),
            UtilitySpec::BetaProducts { alpha, beta } => format!(
                "Your satisfaction is the product of one increasing curve per outcome, each saturating at 1 when the outcome reaches 1 (curve shapes alpha = {}, beta = {}). A single low outcome drags the whole product down.",
                py_list(alpha),
                py_list(beta)
            ),
            UtilitySpec::PiecewiseLinear { beta1, beta2, t, .. } => format!(
                "Each outcome has a threshold {}. Below its threshold an outcome loses value steeply (slopes {}); above it further gains are worth much less (slopes {}). Satisfaction is the sum over outcomes.",
                py_list(t),
                py_list(beta1),
                py_list(beta2)
            ),
            UtilitySpec::ThermalDesirability { smaller, floor, .. } => {
                let names = ["PPD", "DR", "dT_vert", "dT_pr"];
                let parts: Vec<String> = names
                    .iter()
                    .zip(smaller)
                    .map(|(n, b)| format!("{n} is fully acceptable up to {} and unacceptable from {}", b.l, b.h))
                    .collect();
                format!(
                    "Your comfort depends on all five metrics at once: {}; floor temperature is ideal between {} and {} and unacceptable below {} or above {}. Any single unacceptable metric makes you fully dissatisfied.",
                    parts.join("; "),
                    floor.l,
                    floor.h,
                    floor.l_min,
                    floor.h_max
                )
            }
        }
    }

    /// Extra instructions keeping simulated answers natural.
    pub fn utility_constraints(&self) -> String {
        match &self.utility {
            UtilitySpec::ThermalDesirability { .. } => "Speak like an occupant describing how the room feels; prefer qualitative descriptions of comfort over exact numbers.".to_string(),
            _ => "You may mention which outcomes matter most and roughly which values you find acceptable, but never give exact slopes, weights or formulas.".to_string(),
        }
    }

    /// Prior-knowledge text. Point and area priors look at the best of
    /// `n_samples` uniform inputs; domain priors describe the variables.
    pub fn prior_text<R: Rng + ?Sized>(&self, kind: PriorKind, n_samples: usize, top: usize, rng: &mut R) -> Result<String> {
        match kind {
            PriorKind::Domain => match self.outcome {
                OutcomeFn::Thermal { .. } => Ok(thermal_domain_prior(&self.space)),
                OutcomeFn::Dtlz2 { .. } => Err(LiloError::config("domain prior is only defined for thermal environments")),
            },
            PriorKind::Point | PriorKind::Area => {
                if top == 0 || n_samples < top {
                    return Err(LiloError::config("prior needs 1 <= top <= n_samples"));
                }
                let d = self.dim();
                let mut scored: Vec<(Vec<f64>, f64)> = (0..n_samples)
                    .map(|_| {
                        let u: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                        let x = self.space.from_unit(&u);
                        let g = self.true_utility(&x)?;
                        Ok((u, g))
                    })
                    .collect::<Result<_>>()?;
                scored.sort_by(|a, b| b.1.total_cmp(&a.1));
                scored.truncate(top);
                let round = |v: f64| (v * 1000.0).round() / 1000.0;
                if kind == PriorKind::Point {
                    let pts: Vec<String> = scored.iter().map(|(u, _)| py_list(&u.iter().map(|&v| round(v)).collect::<Vec<_>>())).collect();
                    Ok(format!("- Based on my experience, the following inputs should bring good results: [{}].", pts.join(", ")))
                } else {
                    let ranges: Vec<String> = (0..d)
                        .map(|j| {
                            let lo = scored.iter().map(|s| s.0[j]).fold(f64::INFINITY, f64::min);
                            let hi = scored.iter().map(|s| s.0[j]).fold(f64::NEG_INFINITY, f64::max);
                            format!("{}: [{:?}, {:?}]", self.space.names[j], round(lo), round(hi))
                        })
                        .collect();
                    Ok(format!(
                        "- Based on my experience, inputs within these ranges should bring good results {{{}}}:",
                        ranges.join(", ")
                    ))
                }
            }
        }
    }
}

fn thermal_domain_prior(space: &SearchSpace) -> String {
    let axes: Vec<String> = space
        .names
        .iter()
        .zip(space.lower.iter().zip(&space.upper))
        .map(|(n, (l, h))| format!("    {n} [{l}, {h}]"))
        .collect();
    format!(
        "- The outcomes describe the thermal comfort of a person in a room: PPD is the predicted percentage of people dissatisfied with the thermal sensation, DR is the percentage dissatisfied due to draught, dT_vert is the vertical air temperature difference between head and ankles, dT_pr is the radiant temperature asymmetry and T_floor is the floor surface temperature. Lower PPD, DR, dT_vert and dT_pr are more comfortable; the floor should be neither cold nor hot.\n- The parameters x control the indoor climate. These parameters and their ranges are:\n{}",
        axes.join("\n")
    )
}

/// Ids accepted by [`Environment::from_id`].
pub fn registered_ids() -> &'static [&'static str] {
    &REGISTRY
}
