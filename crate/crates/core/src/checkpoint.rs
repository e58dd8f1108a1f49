//! Versioned trainer checkpoints: network parameters, normalizer state,
//! optimizer velocities, actuator parameters, and the RNG position.
//! Replay contents are deliberately not stored, so a resumed run restarts
//! its episode and refills the buffer.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::Env;
use crate::error::{Error, Result};
use crate::learner::{Learner, TrainConfig};
use crate::neural::{GaussianPolicy, Mlp, MomentumSgd, RunningNorm};
use crate::util::Workers;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub master_seed: u64,
    pub iteration: usize,
    pub tuples_seen: u64,
    pub cfg: TrainConfig,
    pub actor_net: Mlp,
    pub actor_sigma: Vec<f64>,
    pub actor_bounds: Vec<[f64; 2]>,
    pub critic: Mlp,
    pub norm: RunningNorm,
    pub actor_opt: MomentumSgd,
    pub critic_opt: MomentumSgd,
    pub rng: ChaCha8Rng,
    /// Packed actuator parameters at save time; applied to the restored
    /// environment so optimized models survive the round trip.
    pub psi: Vec<f64>,
}

impl Checkpoint {
    pub fn capture(l: &Learner) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            master_seed: l.master_seed(),
            iteration: l.iteration,
            tuples_seen: l.tuples_seen,
            cfg: l.cfg.clone(),
            actor_net: l.actor.net.clone(),
            actor_sigma: l.actor.sigma.clone(),
            actor_bounds: l.actor.bounds.clone(),
            critic: l.critic.clone(),
            norm: l.norm.clone(),
            actor_opt: l.actor_opt.clone(),
            critic_opt: l.critic_opt.clone(),
            rng: l.rng_state().clone(),
            psi: l.env.actuation.pack_psi(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        serde_json::to_writer(&mut w, self).map_err(|e| Error::invalid("checkpoint", e.to_string()))?;
        use std::io::Write;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::config(
                "checkpoint.version",
                format!("expected {CHECKPOINT_VERSION}, found {}", ck.version),
            ));
        }
        Ok(ck)
    }

    /// Rebuilds a learner around `env`, which must match the checkpoint's
    /// dimensions. Stored actuator parameters are unpacked against the
    /// environment's actuation, so they land inside its search bounds.
    pub fn restore(self, env: Env, workers: Workers) -> Result<Learner> {
        let psi_len = env.actuation.psi_len();
        if self.psi.len() != psi_len {
            return Err(Error::config(
                "checkpoint.psi",
                format!(
                    "stores {} actuator parameters but the actuation has {psi_len}",
                    self.psi.len()
                ),
            ));
        }
        let state_dim = env.state_dim();
        let action_dim = env.action_dim();
        if self.actor_net.input_dim() != state_dim || self.critic.input_dim() != state_dim {
            return Err(Error::config(
                "checkpoint",
                format!(
                    "networks take {} inputs but the environment emits {state_dim}",
                    self.actor_net.input_dim()
                ),
            ));
        }
        if self.actor_net.output_dim() != action_dim {
            return Err(Error::config(
                "checkpoint",
                format!(
                    "actor emits {} actions but the environment takes {action_dim}",
                    self.actor_net.output_dim()
                ),
            ));
        }

        let mut l = Learner::new(env, self.cfg, self.master_seed, workers)?;
        let act = l.env.actuation.unpack_psi(&self.psi)?;
        l.adopt_actuation(act);
        l.actor = GaussianPolicy::new(self.actor_net, self.actor_sigma, self.actor_bounds);
        l.critic = self.critic;
        l.norm = self.norm;
        l.actor_opt = self.actor_opt;
        l.critic_opt = self.critic_opt;
        l.restore_run_state(self.iteration, self.tuples_seen, self.rng);
        Ok(l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actuation::Actuation;
    use crate::rigid2d::{CharacterModel, GroundProfile, SimConfig, Simulator};
    use crate::task::{ReferenceMotion, RewardWeights, Task};

    const MODEL_DOC: &str = r#"{
        "links": [
            {"name": "torso", "length": 0.6, "mass": 10.0, "com_offset": [0.3, 0.0], "inertia": 0.3},
            {"name": "leg", "length": 0.5, "mass": 4.0, "com_offset": [0.25, 0.0], "inertia": 0.1},
            {"name": "foot", "length": 0.2, "mass": 1.0, "com_offset": [0.1, 0.0], "inertia": 0.01}
        ],
        "joints": [
            {"name": "hip", "parent": "torso", "child": "leg", "parent_anchor": [0.0, 0.0],
             "child_anchor": [0.0, 0.0], "rest_angle": -3.141592653589793,
             "limits": [-1.5, 1.5], "torque_limit": 100.0},
            {"name": "ankle", "parent": "leg", "child": "foot", "parent_anchor": [0.5, 0.0],
             "child_anchor": [0.0, 0.0], "rest_angle": 1.5707963267948966,
             "limits": [-0.9, 0.9], "torque_limit": 40.0}
        ],
        "trunk": ["torso"],
        "end_effectors": ["foot"],
        "contact_points": [{"link": "foot", "offset": [0.0, 0.0]},
                            {"link": "foot", "offset": [0.2, 0.0]}]
    }"#;

    fn fixture_env(actuation_doc: &str) -> Env {
        let model = CharacterModel::from_json_str(MODEL_DOC, "fixture").unwrap();
        let actuation = Actuation::from_json_str(actuation_doc, "fixture", &model).unwrap();
        let mut frames = Vec::new();
        for i in 0..8 {
            let t = i as f64 * 0.125;
            let s = (t * std::f64::consts::TAU).sin();
            frames.push(serde_json::json!({
                "t": t,
                "q": [0.0, 1.1, 1.5707963267948966, 0.2 * s, -0.1 * s]
            }));
        }
        let motion = ReferenceMotion::from_json_str(
            &serde_json::json!({
                "name": "fixture", "cyclic": true, "cycle_duration": 1.0,
                "root_cycle_displacement": 0.0, "frames": frames
            })
            .to_string(),
            "fixture",
        )
        .unwrap();
        let sim = Simulator::new(model, SimConfig::default(), GroundProfile::default());
        Env::new(sim, Task::new(motion, RewardWeights::default()), actuation).unwrap()
    }

    const PD_DOC: &str = r#"{"kind": "pd", "kp": [60.0, 30.0], "kd": [6.0, 3.0]}"#;

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            hidden: vec![12, 8],
            minibatch: 8,
            steps_per_iter: 8,
            iterations: 6,
            eval_every: 1000,
            eval_episodes: 1,
            eval_seconds: 0.5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let mut l = Learner::new(fixture_env(PD_DOC), tiny_cfg(), 33, Workers::Serial).unwrap();
        l.train(|_| {}).unwrap();
        let ck = Checkpoint::capture(&l);

        let dir = std::env::temp_dir().join("gaitlab-ck-roundtrip");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("trainer.json");
        ck.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();

        let a = serde_json::to_string(&ck).unwrap();
        let b = serde_json::to_string(&loaded).unwrap();
        assert_eq!(a, b);

        let restored = loaded.restore(fixture_env(PD_DOC), Workers::Serial).unwrap();
        let again = serde_json::to_string(&Checkpoint::capture(&restored)).unwrap();
        assert_eq!(a, again, "capture(restore(ck)) must reproduce ck");
        assert_eq!(restored.iteration, l.iteration);
        assert_eq!(restored.tuples_seen, l.tuples_seen);
        assert!(restored.replay.is_empty(), "replay is not persisted");
    }

    #[test]
    fn restored_learner_trains_on() {
        let mut l = Learner::new(fixture_env(PD_DOC), tiny_cfg(), 12, Workers::Serial).unwrap();
        l.train(|_| {}).unwrap();
        let ck = Checkpoint::capture(&l);
        let mut resumed = ck.restore(fixture_env(PD_DOC), Workers::Serial).unwrap();
        resumed.cfg.iterations = resumed.iteration + 3;
        resumed.train(|_| {}).unwrap();
        assert_eq!(resumed.iteration, 9);
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let l = Learner::new(fixture_env(PD_DOC), tiny_cfg(), 1, Workers::Serial).unwrap();
        let mut ck = Checkpoint::capture(&l);
        ck.version = CHECKPOINT_VERSION + 1;
        let dir = std::env::temp_dir().join("gaitlab-ck-version");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("trainer.json");
        ck.save(&path).unwrap();
        let err = Checkpoint::load(&path).unwrap_err();
        assert!(err.is_config_error(), "{err:?}");
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let l = Learner::new(fixture_env(PD_DOC), tiny_cfg(), 1, Workers::Serial).unwrap();
        let ck = Checkpoint::capture(&l);
        // Velocity-mode env has the same action dim but a different psi
        // length, so the mismatch is caught before any network surgery.
        let other = fixture_env(r#"{"kind": "velocity", "kd": [6.0, 3.0]}"#);
        let err = ck.restore(other, Workers::Serial).err().unwrap();
        assert!(err.is_config_error(), "{err:?}");
    }

    #[test]
    fn optimized_parameters_survive_restore() {
        let mut l = Learner::new(fixture_env(PD_DOC), tiny_cfg(), 4, Workers::Serial).unwrap();
        let anchor = l.env.actuation.clone();
        let mut psi = anchor.pack_psi();
        for v in psi.iter_mut() {
            *v *= 1.25;
        }
        l.adopt_actuation(anchor.unpack_psi(&psi).unwrap());
        let ck = Checkpoint::capture(&l);
        assert_eq!(ck.psi, psi);
        let restored = ck.restore(fixture_env(PD_DOC), Workers::Serial).unwrap();
        assert_eq!(restored.env.actuation.pack_psi(), psi);
    }
}
