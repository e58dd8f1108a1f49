//! Checks on the bundled biped character, actuation files, and reference
//! motions: dimensions, joint-limit compliance, ground consistency, and a
//! plain PD servo replay that must stay upright without any learning.

use std::path::PathBuf;

use gaitlab::actuation::{Actuation, ActuationKind};
use gaitlab::env::Env;
use gaitlab::rigid2d::{CharacterModel, GroundProfile, SimConfig, Simulator};
use gaitlab::task::{EpisodeStatus, ReferenceMotion, RewardWeights, Task};

fn asset(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../assets")
        .join(name)
}

fn biped() -> CharacterModel {
    CharacterModel::load(asset("biped7.json")).unwrap()
}

fn load_actuation(file: &str) -> Actuation {
    Actuation::load(asset(file), &biped()).unwrap()
}

fn walk_env(actuation: Actuation) -> Env {
    let motion = ReferenceMotion::load(asset("biped_walk.json")).unwrap();
    let sim = Simulator::new(biped(), SimConfig::default(), GroundProfile::default());
    Env::new(sim, Task::new(motion, RewardWeights::default()), actuation).unwrap()
}

#[test]
fn biped_has_seven_links_and_six_joints() {
    let model = biped();
    assert_eq!(model.num_links(), 7);
    assert_eq!(model.num_joints(), 6);
    assert_eq!(model.dof(), 9);
}

#[test]
fn dimensions_match_published_table() {
    let model = biped();
    let cases = [
        ("biped7_tor.json", ActuationKind::Torque, 58, 6, 0),
        ("biped7_vel.json", ActuationKind::Velocity, 58, 6, 6),
        ("biped7_pd.json", ActuationKind::Pd, 58, 6, 12),
        ("biped7_mtu.json", ActuationKind::Mtu, 74, 16, 114),
    ];
    for (file, kind, state, action, psi) in cases {
        let act = Actuation::load(asset(file), &model).unwrap();
        assert_eq!(act.kind, kind);
        let env = walk_env(act);
        assert_eq!(env.state_dim(), state, "{file} state dim");
        assert_eq!(env.action_dim(), action, "{file} action dim");
        assert_eq!(env.actuation.psi_len(), psi, "{file} psi dim");
    }
}

#[test]
fn motions_stay_within_joint_limits() {
    let model = biped();
    let limits: Vec<[f64; 2]> = model.joints.iter().map(|j| j.limits).collect();
    for file in ["biped_walk.json", "biped_march.json", "biped_run.json"] {
        let motion = ReferenceMotion::load(asset(file)).unwrap();
        let steps = 200;
        for i in 0..steps {
            let t = motion.cycle_duration * i as f64 / steps as f64;
            let (q, _) = motion.sample(t, 1.0 / 60.0);
            for (j, lim) in limits.iter().enumerate() {
                let v = q[3 + j];
                assert!(
                    v >= lim[0] - 1e-9 && v <= lim[1] + 1e-9,
                    "{file} joint {j} = {v} outside {lim:?} at t = {t}"
                );
            }
        }
    }
}

#[test]
fn reference_feet_track_the_ground() {
    // At every phase the lower foot must be close to the ground and no
    // contact point may penetrate it.
    let model = biped();
    let sim = Simulator::new(model, SimConfig::default(), GroundProfile::default());
    for file in ["biped_walk.json", "biped_march.json"] {
        let motion = ReferenceMotion::load(asset(file)).unwrap();
        let task = Task::new(motion, RewardWeights::default());
        let steps = 100;
        for i in 0..steps {
            let t = task.motion.cycle_duration * i as f64 / steps as f64;
            let st = task.reference_state(t);
            let fk = sim.fk(&st);
            let mut lowest = f64::INFINITY;
            for cp in &sim.model.contact_points {
                let rot = nalgebra::Rotation2::new(fk.link_angle[cp.link]);
                let p = fk.link_origin[cp.link] + rot * cp.offset;
                lowest = lowest.min(p.y);
            }
            // Linear interpolation between keyframes can dip a contact a
            // few millimetres below ground; the contact model absorbs it.
            assert!(lowest > -0.005, "{file}: penetration {lowest} at t = {t}");
            assert!(lowest < 0.03, "{file}: floating by {lowest} at t = {t}");
        }
    }
}

#[test]
fn pd_servo_replays_the_walk_without_falling() {
    let act = load_actuation("biped7_pd.json");
    let mut env = walk_env(act);
    env.reset_at(0.0, 30.0);
    let dt = env.task.control_dt;
    // A blind servo has no velocity feedforward and cannot balance the
    // unactuated root indefinitely; surviving a couple of cycles shows the
    // motion, gains, and contact model are mutually consistent.
    let steps = (2.5 / dt) as usize;
    for k in 0..steps {
        let t = env.phase_time() + dt;
        let (q, _) = env.task.motion.sample(t, dt);
        let action: Vec<f64> = q.as_slice()[3..].to_vec();
        let out = env.step(&action);
        assert!(
            out.status != EpisodeStatus::FallEnd,
            "fell at step {k} ({:.2} s)",
            k as f64 * dt
        );
    }
}

#[test]
fn pd_servo_reward_stays_high() {
    let act = load_actuation("biped7_pd.json");
    let mut env = walk_env(act);
    env.reset_at(0.0, 30.0);
    let dt = env.task.control_dt;
    let steps = (2.0 / dt) as usize;
    let mut sum = 0.0;
    for _ in 0..steps {
        let t = env.phase_time() + dt;
        let (q, _) = env.task.motion.sample(t, dt);
        let out = env.step(&q.as_slice()[3..].to_vec());
        sum += out.reward;
    }
    let mean = sum / steps as f64;
    assert!(mean > 0.3, "mean tracking reward {mean} too low");
}

#[test]
fn mtu_biped_runs_and_stays_finite() {
    let act = load_actuation("biped7_mtu.json");
    let mut env = walk_env(act);
    env.reset_at(0.0, 30.0);
    // Constant mid-range excitation: not a gait, but every muscle fires
    // and the integration must stay finite.
    let action = vec![0.3; env.action_dim()];
    let dt = env.task.control_dt;
    for _ in 0..(2.0 / dt) as usize {
        let out = env.step(&action);
        assert!(out.reward.is_finite());
        if out.status == EpisodeStatus::FallEnd {
            break;
        }
    }
    let obs = env.observe();
    assert!(obs.iter().all(|v| v.is_finite()));
}
