//! Running feature normalization.
//!
//! State features mix metres, metres per second, and radians; networks
//! see them shifted and scaled by running statistics. Training freezes
//! a snapshot into every checkpoint so saved policies replay exactly.

use serde::{Deserialize, Serialize};

/// Welford-style running mean and variance per dimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunningNorm {
    count: f64,
    mean: Vec<f64>,
    /// Sum of squared deviations from the running mean.
    m2: Vec<f64>,
    frozen: bool,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        RunningNorm {
            count: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            frozen: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> f64 {
        self.count
    }

    /// Folds one sample into the statistics; ignored once frozen.
    pub fn observe(&mut self, x: &[f64]) {
        if self.frozen {
            return;
        }
        debug_assert_eq!(x.len(), self.mean.len());
        self.count += 1.0;
        for i in 0..self.mean.len() {
            let d = x[i] - self.mean[i];
            self.mean[i] += d / self.count;
            self.m2[i] += d * (x[i] - self.mean[i]);
        }
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn std(&self, i: usize) -> f64 {
        if self.count < 2.0 {
            1.0
        } else {
            (self.m2[i] / self.count).sqrt().max(1e-6)
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.mean.len());
        if self.count < 2.0 {
            return x.to_vec();
        }
        x.iter()
            .enumerate()
            .map(|(i, v)| (v - self.mean[i]) / self.std(i))
            .collect()
    }
}
