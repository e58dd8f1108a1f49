//! Networks, optimizer, input normalization, and the Gaussian policy.
//!
//! Everything here is deliberately small and hand-rolled: two rectifier
//! hidden layers and a linear output head cover both the actor and the
//! critic, and exact reverse-mode gradients keep the whole stack free of
//! framework dependencies.

pub mod mlp;
pub mod normalizer;
pub mod optim;
pub mod policy;

pub use mlp::{Mlp, MlpGrads, Tape};
pub use normalizer::RunningNorm;
pub use optim::MomentumSgd;
pub use policy::GaussianPolicy;

/// Hidden-layer widths shared by actor and critic.
pub const HIDDEN_SIZES: [usize; 2] = [512, 256];
