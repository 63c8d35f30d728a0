use serde::{Deserialize, Serialize};

use crate::error::{LiloError, Result};

/// Axis-aligned box with named axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SearchSpace {
    pub fn new(names: Vec<String>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if names.len() != lower.len() || lower.len() != upper.len() || names.is_empty() {
            return Err(LiloError::config("search space needs matching, non-empty names and bounds"));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l < u) || !l.is_finite() || !u.is_finite() {
                return Err(LiloError::config(format!("axis {} has invalid bounds [{l}, {u}]", names[i])));
            }
        }
        Ok(Self { names, lower, upper })
    }

    /// `[0, 1]^d` with axes `x0..x{d-1}`.
    pub fn unit(d: usize) -> Self {
        Self {
            names: (0..d).map(|i| format!("x{i}")).collect(),
            lower: vec![0.0; d],
            upper: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| v >= l && v <= u)
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.lower.iter().zip(&self.upper)).map(|(v, (l, u))| v.clamp(*l, *u)).collect()
    }

    /// Maps box coordinates to the unit cube.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (v - l) / (u - l))
            .collect()
    }

    /// Maps unit-cube coordinates to the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, h))| (l + v * (h - l)).clamp(*l, *h))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_round_trip() {
        let s = SearchSpace::new(vec!["a".into(), "b".into()], vec![18.0, -1.0], vec![32.0, 1.0]).unwrap();
        let x = [25.0, 0.5];
        let back = s.from_unit(&s.to_unit(&x));
        assert!((back[0] - 25.0).abs() < 1e-12 && (back[1] - 0.5).abs() < 1e-12);
        assert_eq!(s.clamp(&[40.0, -3.0]), vec![32.0, -1.0]);
        assert!(!s.contains(&[40.0, 0.0]));
    }

    #[test]
    fn rejects_inverted_bounds() {
        assert!(SearchSpace::new(vec!["a".into()], vec![1.0], vec![0.0]).is_err());
    }
}
