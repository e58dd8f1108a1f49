//! Articulated rigid-body dynamics in reduced coordinates.
//!
//! The character is a planar tree of links; generalized coordinates are the
//! root pose (x, y, angle) followed by one angle per joint. Each step
//! assembles the joint-space mass matrix from COM Jacobians,
//!
//! ```text
//! M(q) = sum_i  m_i J_i^T J_i  +  I_i s_i s_i^T
//! ```
//!
//! where `J_i` maps generalized rates to link-i COM velocity and `s_i`
//! selects the rotational coordinates on the path to link i. Forces
//! (gravity, contact, joint torques, limit springs) enter through the same
//! Jacobians, the velocity-product term is subtracted on the right-hand
//! side, and the system is integrated with semi-implicit Euler:
//! velocities first, then positions with the new velocities.

use nalgebra::{DMatrix, DVector, Rotation2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rigid2d::character::CharacterModel;
use crate::rigid2d::ground::{ContactConfig, GroundProfile};
use crate::rigid2d::state::DynamicsState;

/// 90-degree counterclockwise rotation; the derivative of a rotating
/// lever arm.
#[inline]
fn perp(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

#[inline]
fn cross2(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Velocity magnitude beyond which the state is declared divergent.
const BLOWUP_RATE: f64 = 1.0e4;
/// Root translation beyond which the state is declared divergent.
const BLOWUP_POS: f64 = 1.0e5;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Gravitational acceleration magnitude, m/s^2 (acts along -y).
    pub gravity: f64,
    /// Physics substep, seconds.
    pub substep_dt: f64,
    /// One-sided spring stiffness at joint limits, N m/rad.
    pub limit_stiffness: f64,
    /// Damping applied while a joint limit is violated, N m s/rad.
    pub limit_damping: f64,
    pub joint_limit_springs: bool,
    pub contact: ContactConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            gravity: 9.81,
            substep_dt: 1.0 / 600.0,
            limit_stiffness: 800.0,
            limit_damping: 8.0,
            joint_limit_springs: true,
            contact: ContactConfig::default(),
        }
    }
}

/// World force applied at a link-frame offset. Used for perturbation
/// pulses during evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ExternalForce {
    pub link: usize,
    /// Application point in the link frame.
    pub offset: Vector2<f64>,
    /// Force in world coordinates, N.
    pub force: Vector2<f64>,
}

/// Per-link kinematics computed once per substep.
#[derive(Debug, Clone)]
pub struct FkData {
    pub link_origin: Vec<Vector2<f64>>,
    pub link_angle: Vec<f64>,
    pub link_origin_vel: Vec<Vector2<f64>>,
    pub link_omega: Vec<f64>,
    pub joint_world: Vec<Vector2<f64>>,
    pub joint_world_vel: Vec<Vector2<f64>>,
    pub com: Vec<Vector2<f64>>,
    pub com_vel: Vec<Vector2<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct Energy {
    pub kinetic: f64,
    pub potential: f64,
}

impl Energy {
    pub fn total(&self) -> f64 {
        self.kinetic + self.potential
    }
}

#[derive(Debug, Clone)]
pub struct Simulator {
    pub model: CharacterModel,
    pub config: SimConfig,
    pub ground: GroundProfile,
}

impl Simulator {
    pub fn new(model: CharacterModel, config: SimConfig, ground: GroundProfile) -> Self {
        Simulator {
            model,
            config,
            ground,
        }
    }

    /// Forward kinematics: frame poses and velocities for every link,
    /// world positions and velocities of every joint pivot, and COM
    /// positions and velocities.
    pub fn fk(&self, state: &DynamicsState) -> FkData {
        let m = &self.model;
        let nl = m.num_links();
        let nj = m.num_joints();
        let mut fk = FkData {
            link_origin: vec![Vector2::zeros(); nl],
            link_angle: vec![0.0; nl],
            link_origin_vel: vec![Vector2::zeros(); nl],
            link_omega: vec![0.0; nl],
            joint_world: vec![Vector2::zeros(); nj],
            joint_world_vel: vec![Vector2::zeros(); nj],
            com: vec![Vector2::zeros(); nl],
            com_vel: vec![Vector2::zeros(); nl],
        };
        let root = m.root();
        fk.link_origin[root] = state.root_pos();
        fk.link_angle[root] = state.q[2];
        fk.link_origin_vel[root] = Vector2::new(state.qd[0], state.qd[1]);
        fk.link_omega[root] = state.qd[2];

        // Joints are in topological order, so parents are already placed.
        for (ji, j) in m.joints.iter().enumerate() {
            let arm_p = Rotation2::new(fk.link_angle[j.parent]) * j.parent_anchor;
            let pivot = fk.link_origin[j.parent] + arm_p;
            let pivot_vel =
                fk.link_origin_vel[j.parent] + fk.link_omega[j.parent] * perp(arm_p);
            let angle = fk.link_angle[j.parent] + j.rest_angle + state.q[3 + ji];
            let omega = fk.link_omega[j.parent] + state.qd[3 + ji];
            let arm_c = Rotation2::new(angle) * j.child_anchor;
            fk.joint_world[ji] = pivot;
            fk.joint_world_vel[ji] = pivot_vel;
            fk.link_angle[j.child] = angle;
            fk.link_omega[j.child] = omega;
            fk.link_origin[j.child] = pivot - arm_c;
            fk.link_origin_vel[j.child] = pivot_vel - omega * perp(arm_c);
        }

        for (li, link) in m.links.iter().enumerate() {
            let arm = Rotation2::new(fk.link_angle[li]) * Vector2::from(link.com_offset);
            fk.com[li] = fk.link_origin[li] + arm;
            fk.com_vel[li] = fk.link_origin_vel[li] + fk.link_omega[li] * perp(arm);
        }
        fk
    }

    /// Nonzero COM-Jacobian columns for link `li`: `(coordinate, d com / d q)`.
    fn active_columns(
        &self,
        li: usize,
        fk: &FkData,
        out: &mut Vec<(usize, Vector2<f64>)>,
    ) {
        out.clear();
        out.push((0, Vector2::new(1.0, 0.0)));
        out.push((1, Vector2::new(0.0, 1.0)));
        let root_origin = fk.link_origin[self.model.root()];
        out.push((2, perp(fk.com[li] - root_origin)));
        for &j in self.model.path_joints(li) {
            out.push((3 + j, perp(fk.com[li] - fk.joint_world[j])));
        }
    }

    pub fn mass_matrix(&self, fk: &FkData) -> DMatrix<f64> {
        let n = self.model.dof();
        let mut mass = DMatrix::zeros(n, n);
        let mut cols = Vec::with_capacity(n);
        for (li, link) in self.model.links.iter().enumerate() {
            self.active_columns(li, fk, &mut cols);
            for &(a, ca) in &cols {
                for &(b, cb) in &cols {
                    mass[(a, b)] += link.mass * ca.dot(&cb);
                }
            }
            // Rotational coordinates on the path all add the link's
            // angular velocity, so the selector is 1 on each of them.
            let mut rot_rows: Vec<usize> = vec![2];
            rot_rows.extend(self.model.path_joints(li).iter().map(|&j| 3 + j));
            for &a in &rot_rows {
                for &b in &rot_rows {
                    mass[(a, b)] += link.inertia;
                }
            }
        }
        mass
    }

    /// Accumulates the generalized force of a world-frame force applied at
    /// a world point rigidly attached to link `li`.
    fn apply_point_force(
        &self,
        li: usize,
        point: Vector2<f64>,
        force: Vector2<f64>,
        fk: &FkData,
        out: &mut DVector<f64>,
    ) {
        out[0] += force.x;
        out[1] += force.y;
        let root_origin = fk.link_origin[self.model.root()];
        out[2] += perp(point - root_origin).dot(&force);
        for &j in self.model.path_joints(li) {
            out[3 + j] += perp(point - fk.joint_world[j]).dot(&force);
        }
    }

    /// COM accelerations with all generalized accelerations zero
    /// (the `Jdot * qdot` term), one per link.
    pub fn velocity_product_accels(
        &self,
        state: &DynamicsState,
        fk: &FkData,
    ) -> Vec<Vector2<f64>> {
        let root = self.model.root();
        let root_vel = fk.link_origin_vel[root];
        let mut out = Vec::with_capacity(self.model.num_links());
        for li in 0..self.model.num_links() {
            let mut acc = state.qd[2] * perp(fk.com_vel[li] - root_vel);
            for &j in self.model.path_joints(li) {
                acc += state.qd[3 + j] * perp(fk.com_vel[li] - fk.joint_world_vel[j]);
            }
            out.push(acc);
        }
        out
    }

    /// World positions and velocities of the declared contact points.
    pub fn contact_kinematics(&self, fk: &FkData) -> Vec<(usize, Vector2<f64>, Vector2<f64>)> {
        self.model
            .contact_points
            .iter()
            .map(|cp| {
                let arm = Rotation2::new(fk.link_angle[cp.link]) * cp.offset;
                let p = fk.link_origin[cp.link] + arm;
                let v = fk.link_origin_vel[cp.link] + fk.link_omega[cp.link] * perp(arm);
                (cp.link, p, v)
            })
            .collect()
    }

    /// Advances the state by one physics substep.
    ///
    /// `joint_torques` has one entry per joint and is clamped to the
    /// model's torque limits. Limit springs and contact forces are added
    /// internally. Fails with [`Error::Blowup`] when the state diverges.
    pub fn step(
        &self,
        state: &mut DynamicsState,
        joint_torques: &[f64],
        external: &[ExternalForce],
    ) -> Result<()> {
        let m = &self.model;
        let n = m.dof();
        let nj = m.num_joints();
        debug_assert_eq!(joint_torques.len(), nj);
        let dt = self.config.substep_dt;

        let fk = self.fk(state);
        let mass = self.mass_matrix(&fk);
        let mut force = DVector::zeros(n);

        // Gravity at each COM.
        for (li, link) in m.links.iter().enumerate() {
            let f = Vector2::new(0.0, -link.mass * self.config.gravity);
            self.apply_point_force(li, fk.com[li], f, &fk, &mut force);
        }

        // Velocity-product bias, moved to the right-hand side.
        let vp = self.velocity_product_accels(state, &fk);
        let mut cols = Vec::with_capacity(n);
        for (li, link) in m.links.iter().enumerate() {
            self.active_columns(li, &fk, &mut cols);
            for &(a, ca) in &cols {
                force[a] -= link.mass * ca.dot(&vp[li]);
            }
        }

        // Actuation torques act directly on their joint coordinate.
        for (ji, (&tau, joint)) in joint_torques.iter().zip(&m.joints).enumerate() {
            force[3 + ji] += tau.clamp(-joint.torque_limit, joint.torque_limit);
        }

        if self.config.joint_limit_springs {
            for (ji, joint) in m.joints.iter().enumerate() {
                let q = state.q[3 + ji];
                let excess = if q > joint.limits[1] {
                    q - joint.limits[1]
                } else if q < joint.limits[0] {
                    q - joint.limits[0]
                } else {
                    continue;
                };
                force[3 + ji] += -self.config.limit_stiffness * excess
                    - self.config.limit_damping * state.qd[3 + ji];
            }
        }

        // Penalty contact at each declared point: spring-damper normal,
        // regularized Coulomb friction.
        let cc = self.config.contact;
        let mut trunk_touching = false;
        for (link, p, v) in self.contact_kinematics(&fk) {
            let depth = self.ground.height_at(p.x) - p.y;
            if depth <= 0.0 {
                continue;
            }
            let normal = (cc.k_normal * depth - cc.c_normal * v.y).max(0.0);
            let tangential = -cc.friction * normal * (v.x / cc.v_reg).clamp(-1.0, 1.0);
            self.apply_point_force(link, p, Vector2::new(tangential, normal), &fk, &mut force);
            if m.is_trunk(link) {
                trunk_touching = true;
            }
        }

        for ext in external {
            let arm = Rotation2::new(fk.link_angle[ext.link]) * ext.offset;
            self.apply_point_force(ext.link, fk.link_origin[ext.link] + arm, ext.force, &fk, &mut force);
        }

        let accel = if m.fixed_root {
            let mut acc = DVector::zeros(n);
            if nj > 0 {
                let sub = mass.view((3, 3), (nj, nj)).into_owned();
                let rhs = force.rows(3, nj).into_owned();
                acc.rows_mut(3, nj).copy_from(&solve_spd(sub, rhs)?);
            }
            acc
        } else {
            solve_spd(mass, force)?
        };

        state.qd += dt * &accel;
        if m.fixed_root {
            state.qd[0] = 0.0;
            state.qd[1] = 0.0;
            state.qd[2] = 0.0;
        }
        // Position update uses the new velocity (semi-implicit Euler).
        state.q += dt * &state.qd;
        state.time += dt;

        if trunk_touching {
            state.trunk_contact_s += dt;
        } else {
            state.trunk_contact_s = 0.0;
        }

        if !state.is_finite() {
            return Err(Error::Blowup {
                quantity: "non-finite state".to_string(),
            });
        }
        if state.qd.amax() > BLOWUP_RATE {
            return Err(Error::Blowup {
                quantity: format!("generalized rate {:.3e}", state.qd.amax()),
            });
        }
        if state.q[0].abs() > BLOWUP_POS || state.q[1].abs() > BLOWUP_POS {
            return Err(Error::Blowup {
                quantity: "root translation".to_string(),
            });
        }
        Ok(())
    }

    pub fn energy(&self, fk: &FkData) -> Energy {
        let mut kinetic = 0.0;
        let mut potential = 0.0;
        for (li, link) in self.model.links.iter().enumerate() {
            kinetic += 0.5 * link.mass * fk.com_vel[li].norm_squared()
                + 0.5 * link.inertia * fk.link_omega[li] * fk.link_omega[li];
            potential += link.mass * self.config.gravity * fk.com[li].y;
        }
        Energy { kinetic, potential }
    }

    pub fn linear_momentum(&self, fk: &FkData) -> Vector2<f64> {
        self.model
            .links
            .iter()
            .enumerate()
            .map(|(li, link)| link.mass * fk.com_vel[li])
            .sum()
    }

    pub fn angular_momentum_about(&self, fk: &FkData, point: Vector2<f64>) -> f64 {
        self.model
            .links
            .iter()
            .enumerate()
            .map(|(li, link)| {
                link.mass * cross2(fk.com[li] - point, fk.com_vel[li])
                    + link.inertia * fk.link_omega[li]
            })
            .sum()
    }

    /// Whole-body centre of mass position and velocity.
    pub fn com_state(&self, fk: &FkData) -> (Vector2<f64>, Vector2<f64>) {
        let total: f64 = self.model.total_mass();
        let mut pos = Vector2::zeros();
        let mut vel = Vector2::zeros();
        for (li, link) in self.model.links.iter().enumerate() {
            pos += link.mass * fk.com[li];
            vel += link.mass * fk.com_vel[li];
        }
        (pos / total, vel / total)
    }
}

fn solve_spd(mass: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    if let Some(chol) = mass.clone().cholesky() {
        return Ok(chol.solve(&rhs));
    }
    mass.lu().solve(&rhs).ok_or_else(|| Error::Blowup {
        quantity: "singular mass matrix".to_string(),
    })
}
