//! Scrambled Halton sequence.
//!
//! Each dimension uses the radical inverse in its own prime base with an
//! independent random permutation of the digits at every position, seeded
//! deterministically.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{LiloError, Result};

const PRIMES: [u32; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131,
];

#[derive(Clone, Debug)]
pub struct ScrambledHalton {
    /// per dimension: per digit position: permutation of 0..base
    perms: Vec<Vec<Vec<u32>>>,
}

impl ScrambledHalton {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 || dim > PRIMES.len() {
            return Err(LiloError::input(format!(
                "scrambled Halton supports 1..={} dimensions, got {dim}",
                PRIMES.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
        let perms = PRIMES[..dim]
            .iter()
            .map(|&base| {
                // enough digits to exhaust double precision
                let n_digits = (53.0 * std::f64::consts::LN_2 / f64::from(base).ln()).ceil() as usize;
                (0..n_digits)
                    .map(|_| {
                        let mut p: Vec<u32> = (0..base).collect();
                        p.shuffle(&mut rng);
                        p
                    })
                    .collect()
            })
            .collect();
        Ok(Self { perms })
    }

    pub fn dim(&self) -> usize {
        self.perms.len()
    }

    /// The `index`-th point, in `[0, 1)^dim`.
    pub fn point(&self, index: u64) -> Vec<f64> {
        self.perms
            .iter()
            .zip(PRIMES)
            .map(|(digit_perms, base)| {
                let base = u64::from(base);
                let inv = 1.0 / base as f64;
                let mut n = index;
                let mut scale = inv;
                let mut v = 0.0;
                for perm in digit_perms {
                    let digit = (n % base) as usize;
                    n /= base;
                    v += f64::from(perm[digit]) * scale;
                    scale *= inv;
                }
                v.min(1.0 - f64::EPSILON)
            })
            .collect()
    }

    /// The first `n` points.
    pub fn points(&self, n: usize) -> Vec<Vec<f64>> {
        (0..n as u64).map(|i| self.point(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_in_unit_cube_and_deterministic() {
        let a = ScrambledHalton::new(8, 7).unwrap();
        let b = ScrambledHalton::new(8, 7).unwrap();
        let pa = a.points(64);
        assert_eq!(pa, b.points(64));
        assert!(pa.iter().flatten().all(|&v| (0.0..1.0).contains(&v)));
        let c = ScrambledHalton::new(8, 8).unwrap();
        assert_ne!(pa, c.points(64));
    }

    #[test]
    fn stratifies_first_dimension() {
        // base 2: each block of 2^k consecutive points covers each of the 2^k strata once
        let h = ScrambledHalton::new(3, 1).unwrap();
        let pts = h.points(16);
        let mut bins = [0usize; 16];
        for p in &pts {
            bins[(p[0] * 16.0) as usize] += 1;
        }
        assert!(bins.iter().all(|&c| c == 1), "{bins:?}");
    }

    #[test]
    fn low_discrepancy_mean() {
        let h = ScrambledHalton::new(5, 3).unwrap();
        let pts = h.points(4096);
        for d in 0..5 {
            let m: f64 = pts.iter().map(|p| p[d]).sum::<f64>() / pts.len() as f64;
            assert!((m - 0.5).abs() < 5e-3, "dim {d} mean {m}");
        }
    }

    #[test]
    fn rejects_bad_dimension() {
        assert!(ScrambledHalton::new(0, 1).is_err());
        assert!(ScrambledHalton::new(33, 1).is_err());
    }
}
