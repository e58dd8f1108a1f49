//! Gaussian policy: a mean network with fixed diagonal exploration noise.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::neural::mlp::Mlp;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub net: Mlp,
    /// Per-dimension exploration stddev, action units.
    pub sigma: Vec<f64>,
    pub bounds: Vec<[f64; 2]>,
}

impl GaussianPolicy {
    pub fn new(net: Mlp, sigma: Vec<f64>, bounds: Vec<[f64; 2]>) -> Self {
        debug_assert_eq!(net.output_dim(), sigma.len());
        debug_assert_eq!(sigma.len(), bounds.len());
        debug_assert!(sigma.iter().all(|s| *s > 0.0));
        GaussianPolicy { net, sigma, bounds }
    }

    pub fn action_dim(&self) -> usize {
        self.sigma.len()
    }

    pub fn mean(&self, s: &[f64]) -> Result<DVector<f64>> {
        self.net.forward(s)
    }

    /// a = mu(s) + lambda * N(0, Sigma). Returned unclamped; callers clamp
    /// at the point of application and store the raw sample.
    pub fn sample(&self, s: &[f64], exploring: bool, rng: &mut impl Rng) -> Result<Vec<f64>> {
        let mu = self.net.forward(s)?;
        let mut a: Vec<f64> = mu.iter().copied().collect();
        if exploring {
            for (i, v) in a.iter_mut().enumerate() {
                let n: f64 = rng.sample(StandardNormal);
                *v += self.sigma[i] * n;
            }
        }
        Ok(a)
    }

    pub fn clamp(&self, a: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(&self.bounds)
            .map(|(v, b)| v.clamp(b[0], b[1]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy(seed: u64) -> GaussianPolicy {
        let net = Mlp::new(&[4, 16, 2], &mut ChaCha8Rng::seed_from_u64(seed));
        GaussianPolicy::new(net, vec![0.3, 0.7], vec![[-1.0, 1.0], [-2.0, 0.5]])
    }

    #[test]
    fn without_exploration_sample_equals_mean() {
        let p = policy(0);
        let s = [0.2, -0.4, 1.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = p.sample(&s, false, &mut rng).unwrap();
        let b = p.sample(&s, false, &mut rng).unwrap();
        assert_eq!(a, b);
        let mu = p.mean(&s).unwrap();
        assert_eq!(a, mu.as_slice().to_vec());
    }

    #[test]
    fn exploration_noise_has_requested_stddev() {
        let p = policy(1);
        let s = [0.5, 0.5, -0.5, 0.1];
        let mu = p.mean(&s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let n = 100_000;
        let mut sum = [0.0f64; 2];
        let mut sumsq = [0.0f64; 2];
        for _ in 0..n {
            let a = p.sample(&s, true, &mut rng).unwrap();
            for d in 0..2 {
                let z = a[d] - mu[d];
                sum[d] += z;
                sumsq[d] += z * z;
            }
        }
        for d in 0..2 {
            let mean = sum[d] / n as f64;
            let std = (sumsq[d] / n as f64 - mean * mean).sqrt();
            let rel = (std - p.sigma[d]).abs() / p.sigma[d];
            assert!(rel < 0.02, "dim {d}: sample stddev {std} vs sigma {}", p.sigma[d]);
            assert!(mean.abs() < 0.02 * p.sigma[d].max(1.0), "dim {d} mean {mean}");
        }
    }

    #[test]
    fn clamp_respects_per_dimension_bounds() {
        let p = policy(2);
        assert_eq!(p.clamp(&[5.0, -5.0]), vec![1.0, -2.0]);
        assert_eq!(p.clamp(&[0.3, 0.2]), vec![0.3, 0.2]);
    }
}
