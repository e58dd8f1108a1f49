//! Momentum SGD with optional weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::mlp::{Mlp, MlpGrads};

/// velocity <- momentum * velocity + grad + decay * param
/// param    <- param - lr * velocity
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentumSgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<f64>,
}

impl MomentumSgd {
    pub fn new(net: &Mlp, lr: f64, momentum: f64, weight_decay: f64) -> Self {
        MomentumSgd {
            lr,
            momentum,
            weight_decay,
            velocity: vec![0.0; net.num_params()],
        }
    }

    /// Applies one update. A non-finite gradient rejects the whole step,
    /// leaving parameters and velocities untouched.
    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::UpdateRejected(
                "non-finite gradient in sgd step".to_string(),
            ));
        }
        if self.velocity.len() != net.num_params() {
            return Err(Error::dim("sgd velocity", net.num_params(), self.velocity.len()));
        }
        let mut flat = vec![0.0; self.velocity.len()];
        Mlp::for_each_grad(grads, |g, idx| flat[idx] = g);
        let (mom, decay, lr) = (self.momentum, self.weight_decay, self.lr);
        let vel = &mut self.velocity;
        net.for_each_param_mut(|p, idx| {
            vel[idx] = mom * vel[idx] + flat[idx] + decay * *p;
            *p -= lr * vel[idx];
        });
        Ok(())
    }

    /// Momentum-only update: velocity decays and keeps pushing the
    /// parameters, but no gradient and no weight decay are added. Used
    /// when a whole minibatch contributes zero gradient.
    pub fn coast(&mut self, net: &mut Mlp) {
        let mom = self.momentum;
        let lr = self.lr;
        let vel = &mut self.velocity;
        net.for_each_param_mut(|p, idx| {
            vel[idx] *= mom;
            *p -= lr * vel[idx];
        });
    }

    pub fn reset_velocity(&mut self) {
        self.velocity.iter_mut().for_each(|v| *v = 0.0);
    }
}
