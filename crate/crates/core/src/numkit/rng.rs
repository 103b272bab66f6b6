use std::f64::consts::PI;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Distribution {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, std: f64 },
}

impl Distribution {
    fn validate(&self) -> Result<()> {
        match *self {
            Distribution::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite()) || low > high {
                    return Err(Error::Argument(format!("uniform({low}, {high}) needs a <= b")));
                }
            }
            Distribution::Normal { mean, std } => {
                if !(mean.is_finite() && std.is_finite()) || std < 0.0 {
                    return Err(Error::Argument(format!("normal({mean}, {std}) needs std >= 0")));
                }
            }
        }
        Ok(())
    }
}

/// Deterministic generator built on the ChaCha8 stream cipher, so the draw
/// sequence for a seed is the same on every platform.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for a numbered sub-stream.
    pub fn fork(&mut self, stream: u64) -> SeededRng {
        let base = self.next_u64();
        SeededRng::new(base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    /// Standard normal via the Box–Muller transform; the second value of each
    /// pair is kept for the next call.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }

    /// Uniform integer in `0..n` without modulo bias.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    /// `k` distinct indices from `0..n`, in ascending order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Result<Vec<usize>> {
        if k > n {
            return Err(Error::Argument(format!("cannot pick {k} of {n} items")));
        }
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        let mut picked = pool[..k].to_vec();
        picked.sort_unstable();
        Ok(picked)
    }

    pub fn draw(&mut self, dist: Distribution, n: usize) -> Result<Vec<f64>> {
        dist.validate()?;
        Ok(match dist {
            Distribution::Uniform { low, high } => (0..n).map(|_| self.uniform_in(low, high)).collect(),
            Distribution::Normal { mean, std } => (0..n).map(|_| mean + std * self.standard_normal()).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let d = Distribution::Normal { mean: 0.0, std: 1.0 };
        let a = SeededRng::new(42).draw(d, 100).unwrap();
        let b = SeededRng::new(42).draw(d, 100).unwrap();
        assert_eq!(a, b);
        let c = SeededRng::new(43).draw(d, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_normal() {
        let v = SeededRng::new(1)
            .draw(Distribution::Normal { mean: 0.0, std: 0.0 }, 17)
            .unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn normal_moments() {
        let v = SeededRng::new(7)
            .draw(Distribution::Normal { mean: 0.0, std: 1.0 }, 100_000)
            .unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        assert!(mean.abs() < 0.02);
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn bad_parameters() {
        let mut rng = SeededRng::new(0);
        assert!(rng.draw(Distribution::Normal { mean: 0.0, std: -1.0 }, 1).is_err());
        assert!(rng.draw(Distribution::Uniform { low: 1.0, high: 0.0 }, 1).is_err());
        assert!(rng.sample_indices(3, 4).is_err());
    }

    #[test]
    fn uniform_range_and_sampling() {
        let mut rng = SeededRng::new(3);
        let v = rng.draw(Distribution::Uniform { low: -2.0, high: 5.0 }, 1000).unwrap();
        assert!(v.iter().all(|&x| (-2.0..5.0).contains(&x)));
        let idx = rng.sample_indices(50, 25).unwrap();
        assert_eq!(idx.len(), 25);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }
}
