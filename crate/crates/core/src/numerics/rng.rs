//! SplitMix64 random source.
//!
//! The generator and its derived samplers are fixed so that every trace can
//! be replayed bit-exactly from a seed:
//!
//! * `next_u64`: `state += 0x9E3779B97F4A7C15`, then the SplitMix64 finaliser
//!   `z = (z ^ z>>30)·0xBF58476D1CE4E5B9; z = (z ^ z>>27)·0x94D049BB133111EB;
//!   z ^ z>>31`.
//! * `uniform`: top 53 bits of `next_u64` scaled by 2⁻⁵³, in `[0, 1)`.
//! * `gaussian`: Box–Muller on two uniforms, `sqrt(-2 ln(1-u1)) · cos(2π u2)`.
//! * `categorical`: one uniform scaled by the weight total, then a linear
//!   scan of the cumulative weights.
//! * `split(i)`: child state `mix(state ^ mix(i + 1))`, a pure function of
//!   the parent state and child index that leaves the parent untouched.

use crate::error::{Error, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic 64-bit random state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub const ALGORITHM: &'static str = "splitmix64";

    pub fn new(seed: u64) -> Self {
        Self { state: mix(seed) }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    /// Independent child stream; does not advance `self`.
    pub fn split(&self, index: u64) -> Rng {
        Rng {
            state: mix(self.state ^ mix(index.wrapping_add(1).wrapping_mul(GOLDEN))),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn gaussian(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniform index in `0..n` (`n > 0`).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    /// Index drawn with probability proportional to `weights`.
    pub fn categorical(&mut self, weights: &[f64]) -> Result<usize> {
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "categorical weights must be finite and nonnegative: {:?}",
                weights
            )));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument(
                "categorical weights sum to zero".into(),
            ));
        }
        let target = self.uniform() * total;
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                last_positive = i;
                acc += w;
                if target < acc {
                    return Ok(i);
                }
            }
        }
        Ok(last_positive)
    }

    /// `k` distinct indices from `0..n`, in draw order.
    pub fn sample_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n);
        // Partial Fisher–Yates over a sparse swap map keeps this O(k).
        let mut swapped = std::collections::HashMap::new();
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let j = i + self.below(n - i);
            let vj = *swapped.get(&j).unwrap_or(&j);
            let vi = *swapped.get(&i).unwrap_or(&i);
            swapped.insert(j, vi);
            out.push(vj);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forced_outcome() {
        let mut rng = Rng::new(3);
        for _ in 0..1000 {
            assert_eq!(rng.categorical(&[1.0, 0.0, 0.0]).unwrap(), 0);
        }
    }

    #[test]
    fn equal_seeds_equal_streams() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
            assert_eq!(a.gaussian().to_bits(), b.gaussian().to_bits());
        }
    }

    #[test]
    fn fair_coin_frequency() {
        let mut rng = Rng::new(7);
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| rng.categorical(&[1.0, 1.0]).unwrap() == 1)
            .count();
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn invalid_weights() {
        let mut rng = Rng::new(1);
        assert!(rng.categorical(&[0.0, 0.0]).is_err());
        assert!(rng.categorical(&[-1.0, 2.0]).is_err());
        assert!(rng.categorical(&[]).is_err());
    }

    #[test]
    fn split_is_pure_and_distinct() {
        let parent = Rng::new(9);
        assert_eq!(parent.split(4), parent.split(4));
        assert_ne!(parent.split(4), parent.split(5));
        let mut p2 = parent.clone();
        p2.next_u64();
        assert_eq!(Rng::new(9), parent);
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = Rng::new(5);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.02);
    }

    #[test]
    fn without_replacement_is_distinct() {
        let mut rng = Rng::new(2);
        for _ in 0..200 {
            let mut ids = rng.sample_without_replacement(500, 5);
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), 5);
            assert!(ids.iter().all(|&i| i < 500));
        }
    }
}
