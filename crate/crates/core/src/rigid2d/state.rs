//! Generalized-coordinate state of a simulated character.

use nalgebra::DVector;

/// Reduced-coordinate state. Layout of `q`:
/// `[root_x, root_y, root_angle, joint_0, joint_1, ...]`, with joint angles
/// measured as deviations from each joint's rest angle. `qd` matches.
#[derive(Debug, Clone)]
pub struct DynamicsState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    pub time: f64,
    /// Muscle contractile-element lengths, empty unless the actuation
    /// model integrates internal muscle state.
    pub l_ce: Vec<f64>,
    /// Seconds the trunk has been in ground contact, reset on separation.
    pub trunk_contact_s: f64,
}

impl DynamicsState {
    pub fn new(dof: usize) -> Self {
        DynamicsState {
            q: DVector::zeros(dof),
            qd: DVector::zeros(dof),
            time: 0.0,
            l_ce: Vec::new(),
            trunk_contact_s: 0.0,
        }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    pub fn root_pos(&self) -> nalgebra::Vector2<f64> {
        nalgebra::Vector2::new(self.q[0], self.q[1])
    }

    pub fn root_angle(&self) -> f64 {
        self.q[2]
    }

    pub fn joint_angle(&self, j: usize) -> f64 {
        self.q[3 + j]
    }

    pub fn joint_rate(&self, j: usize) -> f64 {
        self.qd[3 + j]
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().all(|v| v.is_finite()) && self.qd.iter().all(|v| v.is_finite())
    }
}
