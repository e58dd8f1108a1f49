//! Planar articulated rigid-body simulation.

pub mod character;
pub mod dynamics;
pub mod ground;
pub mod state;

pub use character::{CharacterModel, ContactPoint, Joint, JointResolved, Link, load_character};
pub use dynamics::{Energy, ExternalForce, FkData, SimConfig, Simulator};
pub use ground::{ContactConfig, GroundProfile};
pub use state::DynamicsState;
