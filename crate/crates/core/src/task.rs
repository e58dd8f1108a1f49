//! Imitation task: reference motions, state features, reward, initial
//! states, and episode termination.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rigid2d::{DynamicsState, FkData, Simulator};

/// One reference keyframe: reduced-coordinate pose at time `t`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub q: Vec<f64>,
}

/// Target kinematic trajectory. Velocities are never stored; they are
/// finite-differenced over one control step on demand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceMotion {
    #[serde(default)]
    pub name: String,
    pub cyclic: bool,
    pub cycle_duration: f64,
    /// Root x advance per cycle, metres. Ignored for acyclic motions.
    #[serde(default)]
    pub root_cycle_displacement: f64,
    pub frames: Vec<Frame>,
}

impl ReferenceMotion {
    pub fn from_json_str(text: &str, path: &str) -> Result<Self> {
        let motion: ReferenceMotion = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_string(),
            detail: e.to_string(),
        })?;
        motion.validate()?;
        Ok(motion)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        Self::from_json_str(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::invalid("frames", "motion has no keyframes"));
        }
        if self.frames[0].t != 0.0 {
            return Err(Error::invalid("frames[0].t", "first keyframe must be at t = 0"));
        }
        if !(self.cycle_duration > 0.0) {
            return Err(Error::invalid("cycle_duration", "must be positive"));
        }
        let dim = self.frames[0].q.len();
        for (i, w) in self.frames.windows(2).enumerate() {
            if w[1].t <= w[0].t {
                return Err(Error::invalid(
                    format!("frames[{}].t", i + 1),
                    "keyframe times must be strictly increasing",
                ));
            }
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.q.len() != dim {
                return Err(Error::dim(
                    format!("frames[{i}].q"),
                    dim,
                    f.q.len(),
                ));
            }
            if f.q.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("frames[{i}].q"), "non-finite entry"));
            }
        }
        if self.cyclic && self.frames.last().unwrap().t >= self.cycle_duration {
            return Err(Error::invalid(
                "cycle_duration",
                "cyclic motion must have all keyframes before the cycle end",
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.frames[0].q.len()
    }

    /// Pose at time `t`. Cyclic motions wrap modulo the cycle duration and
    /// accumulate the per-cycle root displacement; acyclic motions clamp to
    /// the last keyframe.
    pub fn sample_pose(&self, t: f64) -> DVector<f64> {
        let dim = self.dim();
        let (local_t, cycles) = if self.cyclic {
            let c = (t / self.cycle_duration).floor();
            (t - c * self.cycle_duration, c)
        } else {
            (t.min(self.frames.last().unwrap().t).max(0.0), 0.0)
        };

        let mut q = DVector::zeros(dim);
        let last = self.frames.last().unwrap();
        if local_t >= last.t {
            if self.cyclic {
                // Between the last keyframe and the wrap point: blend into
                // frame 0 advanced by one cycle displacement.
                let span = self.cycle_duration - last.t;
                let alpha = if span > 0.0 { (local_t - last.t) / span } else { 0.0 };
                for i in 0..dim {
                    let next = self.frames[0].q[i]
                        + if i == 0 { self.root_cycle_displacement } else { 0.0 };
                    q[i] = last.q[i] + alpha * (next - last.q[i]);
                }
            } else {
                for i in 0..dim {
                    q[i] = last.q[i];
                }
            }
        } else {
            let hi = self.frames.partition_point(|f| f.t <= local_t);
            let (f0, f1) = (&self.frames[hi - 1], &self.frames[hi.min(self.frames.len() - 1)]);
            let span = f1.t - f0.t;
            let alpha = if span > 0.0 { (local_t - f0.t) / span } else { 0.0 };
            for i in 0..dim {
                q[i] = f0.q[i] + alpha * (f1.q[i] - f0.q[i]);
            }
        }
        if self.cyclic {
            q[0] += cycles * self.root_cycle_displacement;
        }
        q
    }

    /// Pose and finite-difference velocity over one control step.
    pub fn sample(&self, t: f64, control_dt: f64) -> (DVector<f64>, DVector<f64>) {
        let q = self.sample_pose(t);
        let q_next = self.sample_pose(t + control_dt);
        let qd = (&q_next - &q) / control_dt;
        (q, qd)
    }

    /// Phase in [0, 1): position within the cycle.
    pub fn phase(&self, t: f64) -> f64 {
        let p = (t / self.cycle_duration).fract();
        if p < 0.0 { p + 1.0 } else { p }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub w_pose: f64,
    pub w_vel: f64,
    pub w_end: f64,
    pub w_root: f64,
    pub w_com: f64,
    /// Per-joint diagonal weighting of pose/velocity errors.
    pub joint_w: Vec<f64>,
    /// Weight on the root-orientation term inside the pose/velocity norms.
    pub root_angle_w: f64,
    pub k_end: f64,
    pub k_root: f64,
    pub k_com: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            w_pose: 0.5,
            w_vel: 0.05,
            w_end: 0.15,
            w_root: 0.1,
            w_com: 0.2,
            joint_w: Vec::new(),
            root_angle_w: 1.0,
            k_end: 40.0,
            k_root: 10.0,
            k_com: 10.0,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self, num_joints: usize) -> Result<()> {
        let ws = [self.w_pose, self.w_vel, self.w_end, self.w_root, self.w_com];
        if ws.iter().any(|w| *w < 0.0) {
            return Err(Error::invalid("reward weights", "must be non-negative"));
        }
        let sum: f64 = ws.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "reward weights",
                format!("must sum to 1.0, got {sum}"),
            ));
        }
        if !self.joint_w.is_empty() && self.joint_w.len() != num_joints {
            return Err(Error::dim("joint_w", num_joints, self.joint_w.len()));
        }
        Ok(())
    }

    fn joint_weight(&self, j: usize) -> f64 {
        self.joint_w.get(j).copied().unwrap_or(1.0)
    }
}

/// What fills the second block of the state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateVariant {
    /// Features of the reference pose at the current time (the default).
    TargetFeatures,
    /// A single scalar: phase within the motion cycle.
    Phase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeStatus {
    Running,
    /// The drawn episode duration elapsed; not a failure.
    TimerEnd,
    /// Trunk-ground contact persisted past the fall threshold.
    FallEnd,
}

#[derive(Debug, Clone)]
pub struct Task {
    pub motion: ReferenceMotion,
    pub weights: RewardWeights,
    pub variant: StateVariant,
    /// Trunk contact longer than this ends the episode as a fall, seconds.
    pub fall_threshold_s: f64,
    /// Mean of the exponential episode-duration draw, seconds.
    pub episode_mean_s: f64,
    pub control_dt: f64,
}

impl Task {
    pub fn new(motion: ReferenceMotion, weights: RewardWeights) -> Self {
        Task {
            motion,
            weights,
            variant: StateVariant::TargetFeatures,
            fall_threshold_s: 0.5,
            episode_mean_s: 2.0,
            control_dt: 1.0 / 60.0,
        }
    }

    /// Feature map: root height above ground, per-link COM position
    /// relative to the root, per-link COM velocity.
    pub fn featurize(sim: &Simulator, fk: &FkData) -> Vec<f64> {
        let root = sim.model.root();
        let root_pos = fk.link_origin[root];
        let ground = sim.ground.height_at(root_pos.x);
        let nl = sim.model.num_links();
        let mut phi = Vec::with_capacity(1 + 4 * nl);
        phi.push(root_pos.y - ground);
        for li in 0..nl {
            let rel = fk.com[li] - root_pos;
            phi.push(rel.x);
            phi.push(rel.y);
        }
        for li in 0..nl {
            phi.push(fk.com_vel[li].x);
            phi.push(fk.com_vel[li].y);
        }
        phi
    }

    pub fn feature_len(num_links: usize) -> usize {
        1 + 4 * num_links
    }

    /// Reference state (pose + finite-difference velocity) at time `t`,
    /// packaged for FK.
    pub fn reference_state(&self, t: f64) -> DynamicsState {
        let (q, qd) = self.motion.sample(t, self.control_dt);
        let mut st = DynamicsState::new(q.len());
        st.q = q;
        st.qd = qd;
        st.time = t;
        st
    }

    /// Imitation reward in (0, 1]: weighted product-free sum of five
    /// exponential error terms. Root world position is excluded from the
    /// pose and velocity norms; horizontal tracking enters only through
    /// the COM-velocity term, and end-effector positions are compared
    /// relative to the root's x.
    pub fn reward(
        &self,
        sim: &Simulator,
        state: &DynamicsState,
        fk: &FkData,
        reference: &DynamicsState,
        fk_ref: &FkData,
    ) -> f64 {
        let w = &self.weights;
        let nj = sim.model.num_joints();

        let mut pose_err = w.root_angle_w * (reference.q[2] - state.q[2]).powi(2);
        let mut vel_err = w.root_angle_w * (reference.qd[2] - state.qd[2]).powi(2);
        for j in 0..nj {
            let jw = w.joint_weight(j);
            pose_err += jw * (reference.q[3 + j] - state.q[3 + j]).powi(2);
            vel_err += jw * (reference.qd[3 + j] - state.qd[3 + j]).powi(2);
        }

        let root = sim.model.root();
        let mut end_err = 0.0;
        for &e in &sim.model.end_effectors {
            let rel = fk.com[e] - fk.link_origin[root];
            let rel_ref = fk_ref.com[e] - fk_ref.link_origin[root];
            let dx = rel_ref.x - rel.x;
            let dy = (fk_ref.com[e].y) - (fk.com[e].y);
            end_err += dx * dx + dy * dy;
        }

        let h = fk.link_origin[root].y - sim.ground.height_at(fk.link_origin[root].x);
        let h_ref = fk_ref.link_origin[root].y
            - sim.ground.height_at(fk_ref.link_origin[root].x);
        let root_err = (h_ref - h).powi(2);

        let (_, com_vel) = sim.com_state(fk);
        let (_, com_vel_ref) = sim.com_state(fk_ref);
        let com_err = (com_vel_ref - com_vel).norm_squared();

        w.w_pose * (-pose_err).exp()
            + w.w_vel * (-vel_err).exp()
            + w.w_end * (-w.k_end * end_err).exp()
            + w.w_root * (-w.k_root * root_err).exp()
            + w.w_com * (-w.k_com * com_err).exp()
    }

    /// Draws an initial state uniformly along the reference trajectory.
    /// Returns the state and the phase time it was sampled at.
    pub fn sample_initial_state(&self, rng: &mut impl Rng) -> (DynamicsState, f64) {
        let t = rng.random::<f64>() * self.motion.cycle_duration;
        let mut st = self.reference_state(t);
        st.time = t;
        st.trunk_contact_s = 0.0;
        (st, t)
    }

    /// Episode duration draw: exponential with the configured mean.
    pub fn draw_episode_duration(&self, rng: &mut impl Rng) -> f64 {
        // Inverse CDF; u in (0, 1] avoids ln(0).
        let u: f64 = 1.0 - rng.random::<f64>();
        -self.episode_mean_s * u.ln()
    }

    pub fn episode_status(
        &self,
        state: &DynamicsState,
        elapsed: f64,
        drawn_duration: f64,
    ) -> EpisodeStatus {
        if state.trunk_contact_s > self.fall_threshold_s {
            EpisodeStatus::FallEnd
        } else if elapsed >= drawn_duration {
            EpisodeStatus::TimerEnd
        } else {
            EpisodeStatus::Running
        }
    }
}
