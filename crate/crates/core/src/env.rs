//! Control-step environment: couples the simulator, the imitation task,
//! and an actuation model behind the step interface the learner and the
//! evaluators share.
//!
//! Policies act at the control rate (default 60 Hz); each control step
//! holds the action fixed across the simulation substeps it covers. All
//! randomness is injected by the caller, so an `Env` is deterministic
//! state.

use rand::Rng;

use crate::actuation::{Actuation, ActuationKind};
use crate::error::{Error, Result};
use crate::rigid2d::{DynamicsState, ExternalForce, Simulator};
use crate::task::{EpisodeStatus, StateVariant, Task};

/// Result of one control step.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub reward: f64,
    pub status: EpisodeStatus,
}

/// One simulation substep of a traced rollout.
#[derive(Debug, Clone)]
pub struct SubstepRecord {
    pub time: f64,
    pub torques: Vec<f64>,
    /// Per-unit tendon force; empty unless the actuation kind is MTU.
    pub mtu_forces: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Env {
    pub sim: Simulator,
    pub task: Task,
    pub actuation: Actuation,
    pub state: DynamicsState,
    /// World-frame forces applied on every substep until cleared.
    pub external: Vec<ExternalForce>,
    phase_t: f64,
    elapsed: f64,
    duration: f64,
    substeps: usize,
}

impl Env {
    pub fn new(sim: Simulator, task: Task, actuation: Actuation) -> Result<Self> {
        let substeps = substeps_per_control(task.control_dt, sim.config.substep_dt)?;
        task.weights.validate(sim.model.num_joints())?;
        if task.motion.dim() != sim.model.dof() {
            return Err(Error::dim("motion pose", sim.model.dof(), task.motion.dim()));
        }
        let state = DynamicsState::new(sim.model.dof());
        Ok(Env {
            sim,
            task,
            actuation,
            state,
            external: Vec::new(),
            phase_t: 0.0,
            elapsed: 0.0,
            duration: 0.0,
            substeps,
        })
    }

    pub fn state_dim(&self) -> usize {
        let phi = Task::feature_len(self.sim.model.num_links());
        let target = match self.task.variant {
            StateVariant::TargetFeatures => phi,
            StateVariant::Phase => 1,
        };
        phi + target + self.actuation.extra_state_dims()
    }

    pub fn action_dim(&self) -> usize {
        self.actuation.action_dim()
    }

    pub fn action_bounds(&self) -> &[[f64; 2]] {
        self.actuation.action_bounds()
    }

    pub fn substeps_per_control(&self) -> usize {
        self.substeps
    }

    /// Changes the policy query rate, keeping the physics rate fixed.
    pub fn set_control_rate(&mut self, hz: f64) -> Result<()> {
        if !(hz > 0.0) {
            return Err(Error::config("control_rate", "must be positive"));
        }
        let dt = 1.0 / hz;
        self.substeps = substeps_per_control(dt, self.sim.config.substep_dt)?;
        self.task.control_dt = dt;
        Ok(())
    }

    /// Starts a fresh episode from a state sampled along the reference
    /// motion, with the episode length drawn from the exponential timer.
    pub fn reset(&mut self, rng: &mut impl Rng) {
        let (state, t) = self.task.sample_initial_state(rng);
        self.state = state;
        self.state.l_ce = self
            .actuation
            .init_l_ce(self.state.q.as_slice().split_at(3).1);
        self.phase_t = t;
        self.elapsed = 0.0;
        self.duration = self.task.draw_episode_duration(rng);
        self.external.clear();
    }

    /// Starts an episode at a fixed phase with a fixed duration; used by
    /// deterministic evaluation protocols.
    pub fn reset_at(&mut self, phase_t: f64, duration: f64) {
        self.state = self.task.reference_state(phase_t);
        self.state.l_ce = self
            .actuation
            .init_l_ce(self.state.q.as_slice().split_at(3).1);
        self.phase_t = phase_t;
        self.elapsed = 0.0;
        self.duration = duration;
        self.external.clear();
    }

    pub fn phase_time(&self) -> f64 {
        self.phase_t
    }

    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    pub fn episode_duration(&self) -> f64 {
        self.duration
    }

    /// Overrides the drawn episode timer; evaluation protocols run fixed
    /// horizons instead of the training-time exponential draw.
    pub fn set_episode_duration(&mut self, seconds: f64) {
        self.duration = seconds;
    }

    /// State feature vector: simulated features, then the target block
    /// (reference features or scalar phase), then contractile-element
    /// lengths for MTU actuation.
    pub fn observe(&self) -> Vec<f64> {
        let fk = self.sim.fk(&self.state);
        let mut s = Task::featurize(&self.sim, &fk);
        match self.task.variant {
            StateVariant::TargetFeatures => {
                let reference = self.task.reference_state(self.phase_t);
                let fk_ref = self.sim.fk(&reference);
                s.extend(Task::featurize(&self.sim, &fk_ref));
            }
            StateVariant::Phase => s.push(self.task.motion.phase(self.phase_t)),
        }
        if self.actuation.kind == ActuationKind::Mtu {
            s.extend(&self.state.l_ce);
        }
        s
    }

    /// Advances one control step under a fixed action. A simulation
    /// blowup or actuation fault ends the episode as a fall with zero
    /// reward for the step.
    pub fn step(&mut self, action: &[f64]) -> StepOutcome {
        self.step_inner(action, None)
    }

    /// As [`Env::step`], recording per-substep torques.
    pub fn step_traced(&mut self, action: &[f64], trace: &mut Vec<SubstepRecord>) -> StepOutcome {
        self.step_inner(action, Some(trace))
    }

    fn step_inner(
        &mut self,
        action: &[f64],
        mut trace: Option<&mut Vec<SubstepRecord>>,
    ) -> StepOutcome {
        for _ in 0..self.substeps {
            let nj = self.sim.model.num_joints();
            let q_joints: Vec<f64> = (0..nj).map(|j| self.state.q[3 + j]).collect();
            let qd_joints: Vec<f64> = (0..nj).map(|j| self.state.qd[3 + j]).collect();
            let out = match self.actuation.compute_torques(
                action,
                &q_joints,
                &qd_joints,
                &mut self.state.l_ce,
                self.sim.config.substep_dt,
            ) {
                Ok(out) => out,
                Err(_) => return self.abort_as_fall(),
            };
            if let Some(t) = trace.as_deref_mut() {
                t.push(SubstepRecord {
                    time: self.state.time,
                    torques: out.torques.clone(),
                    mtu_forces: out.mtu_forces.clone(),
                });
            }
            if self
                .sim
                .step(&mut self.state, &out.torques, &self.external)
                .is_err()
            {
                return self.abort_as_fall();
            }
        }
        self.phase_t += self.task.control_dt;
        self.elapsed += self.task.control_dt;

        let reference = self.task.reference_state(self.phase_t);
        let fk = self.sim.fk(&self.state);
        let fk_ref = self.sim.fk(&reference);
        let reward = self.task.reward(&self.sim, &self.state, &fk, &reference, &fk_ref);
        let status = self
            .task
            .episode_status(&self.state, self.elapsed, self.duration);
        StepOutcome { reward, status }
    }

    fn abort_as_fall(&mut self) -> StepOutcome {
        self.elapsed += self.task.control_dt;
        StepOutcome {
            reward: 0.0,
            status: EpisodeStatus::FallEnd,
        }
    }
}

fn substeps_per_control(control_dt: f64, substep_dt: f64) -> Result<usize> {
    let ratio = control_dt / substep_dt;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 {
        return Err(Error::config(
            "control_dt",
            format!("must be an integer multiple of the substep ({ratio} substeps)"),
        ));
    }
    Ok(n as usize)
}
