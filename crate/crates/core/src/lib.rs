//! Motion-imitation reinforcement learning for planar articulated
//! characters.
//!
//! The crate simulates 2D linked characters with penalty ground contact,
//! drives them through one of four actuation models (joint torques, target
//! velocities, target angles under PD control, or muscle activations), and
//! trains feedforward control policies to imitate reference motion clips
//! with an actor-critic learner that only updates the actor on positive
//! temporal differences. Actuator parameters can be co-optimized with the
//! policy by alternating policy training with CMA-ES over the actuator
//! description. Evaluation utilities score policies by normalized
//! cumulative reward and probe robustness to pushes, terrain, and control
//! rate.

pub mod actuation;
pub mod actuator_opt;
pub mod checkpoint;
pub mod cma;
pub mod env;
pub mod error;
pub mod eval;
pub mod learner;
pub mod neural;
pub mod rigid2d;
pub mod task;
pub mod util;

pub use error::{Error, Result};
