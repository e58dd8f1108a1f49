//! Alternating actuator optimization: train the policy at fixed actuator
//! parameters, then search the parameters with CMA-ES at a fixed policy,
//! and repeat. The search runs in normalized bound coordinates so a single
//! step size covers gains, forces, and angles at once.

use std::path::Path;

use crate::actuation::Actuation;
use crate::cma::CmaEs;
use crate::env::Env;
use crate::error::{Error, Result};
use crate::eval::episode_return;
use crate::learner::{CurvePoint, Learner};
use crate::neural::{GaussianPolicy, RunningNorm};
use crate::util::{derive_seed, rng_from_seed, run_indexed, Workers};

#[derive(Debug, Clone, PartialEq)]
pub struct AlternationConfig {
    pub passes: usize,
    /// CMA generations per pass; zero skips the search phase entirely.
    pub generations: usize,
    /// CMA population per generation.
    pub samples: usize,
    /// Rollouts averaged into one fitness value.
    pub rollouts: usize,
    pub rollout_seconds: f64,
    /// Policy training iterations per pass, warm-started across passes.
    pub policy_iters: usize,
    /// Initial CMA step size in normalized bound coordinates.
    pub initial_step: f64,
}

impl Default for AlternationConfig {
    fn default() -> Self {
        AlternationConfig {
            passes: 6,
            generations: 250,
            samples: 16,
            rollouts: 16,
            rollout_seconds: 10.0,
            policy_iters: 250_000,
            initial_step: 0.3,
        }
    }
}

impl AlternationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.passes == 0 {
            return Err(Error::config("passes", "must be positive"));
        }
        if self.generations > 0 && self.samples < 4 {
            return Err(Error::config("samples", "must be at least 4 when generations > 0"));
        }
        if self.rollouts == 0 {
            return Err(Error::config("rollouts", "must be positive"));
        }
        if !(self.rollout_seconds > 0.0) {
            return Err(Error::config("rollout_seconds", "must be positive"));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::config("initial_step", "must be positive"));
        }
        Ok(())
    }
}

/// One CMA generation in the pass log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenRecord {
    pub pass: usize,
    pub generation: usize,
    /// Recorded incumbent objective; non-decreasing over the whole run.
    pub best_fitness: f64,
    /// Mean objective over this generation's finite-valued samples.
    pub mean_fitness: f64,
    pub step_size: f64,
}

pub fn pass_csv_header() -> &'static str {
    "pass,generation,best_fitness,mean_fitness,step_size"
}

pub fn pass_csv_row(r: &GenRecord) -> String {
    format!(
        "{},{},{},{},{}",
        r.pass, r.generation, r.best_fitness, r.mean_fitness, r.step_size
    )
}

pub fn write_pass_csv(path: impl AsRef<Path>, rows: &[GenRecord]) -> Result<()> {
    let mut out = String::from(pass_csv_header());
    out.push('\n');
    for r in rows {
        out.push_str(&pass_csv_row(r));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// End-of-pass summary row.
#[derive(Debug, Clone)]
pub struct PassSummary {
    pub pass: usize,
    /// NCR at the end of the pass's training phase.
    pub ncr: f64,
    /// Incumbent objective re-evaluated under the freshly trained policy.
    pub objective_start: f64,
    /// Recorded incumbent objective after the search phase.
    pub objective_best: f64,
    /// Incumbent parameters at the end of the pass.
    pub psi: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AlternationOutcome {
    pub passes: Vec<PassSummary>,
    pub log: Vec<GenRecord>,
    pub curve: Vec<CurvePoint>,
    /// Final packed actuator parameters (the recorded incumbent).
    pub psi: Vec<f64>,
}

/// Mean undiscounted cumulative reward of the frozen policy over
/// `rollouts` episodes played under actuator parameters `psi`, unpacked
/// against `anchor`'s search bounds. Rollout seeds derive from `seed`
/// alone, so with the policy held fixed the value is a pure function of
/// `psi`; an episode that falls contributes the reward earned up to the
/// fall.
pub fn evaluate_psi(
    env: &Env,
    anchor: &Actuation,
    psi: &[f64],
    policy: &GaussianPolicy,
    norm: &RunningNorm,
    rollouts: usize,
    seconds: f64,
    seed: u64,
    workers: Workers,
) -> Result<f64> {
    if rollouts == 0 {
        return Err(Error::config("rollouts", "must be positive"));
    }
    let mut base = env.clone();
    base.actuation = anchor.unpack_psi(psi)?;
    let steps = (seconds / base.task.control_dt).round() as usize;
    let sums = run_indexed(rollouts, workers, |i| {
        let mut e = base.clone();
        let mut rng = rng_from_seed(derive_seed(seed, "rollout", i as u64));
        e.reset(&mut rng);
        e.set_episode_duration(seconds + 1.0);
        episode_return(&mut e, policy, norm, steps, None)
    });
    Ok(sums.iter().sum::<f64>() / rollouts as f64)
}

/// Runs the full alternation on `learner`, which carries the policy, the
/// environment, and the current actuator parameters. Per pass: clear
/// replay (stale transitions), train for `policy_iters`, re-evaluate the
/// incumbent, then run the CMA phase and adopt its best parameters.
///
/// The incumbent and its recorded objective survive across passes; a
/// candidate must beat the record to replace it, so the logged best is
/// non-decreasing over the whole run even though retraining shifts the
/// fitness landscape between passes.
pub fn alternate(
    learner: &mut Learner,
    cfg: &AlternationConfig,
    mut on_curve: impl FnMut(&CurvePoint),
    mut on_record: impl FnMut(&GenRecord),
) -> Result<AlternationOutcome> {
    cfg.validate()?;
    let dim = learner.env.actuation.psi_len();
    if cfg.generations > 0 && dim == 0 {
        return Err(Error::config(
            "generations",
            "this actuation kind has no parameters to search",
        ));
    }
    let anchor = learner.env.actuation.clone();
    let bounds = anchor.psi_bounds();
    let master = learner.master_seed();
    let eval_seed = derive_seed(master, "psi-eval", 0);
    let workers = learner.workers;

    let to_z = |psi: &[f64]| -> Vec<f64> {
        psi.iter()
            .zip(&bounds)
            .map(|(v, b)| {
                if b[1] > b[0] {
                    (v - b[0]) / (b[1] - b[0])
                } else {
                    0.5
                }
            })
            .collect()
    };
    let to_psi = |z: &[f64]| -> Vec<f64> {
        z.iter()
            .zip(&bounds)
            .map(|(t, b)| b[0] + t.clamp(0.0, 1.0) * (b[1] - b[0]))
            .collect()
    };

    let mut incumbent = anchor.pack_psi();
    let mut record = f64::NEG_INFINITY;
    let mut out = AlternationOutcome {
        passes: Vec::with_capacity(cfg.passes),
        log: Vec::new(),
        curve: Vec::new(),
        psi: incumbent.clone(),
    };

    for pass in 0..cfg.passes {
        // Replay tuples were collected under the previous parameters;
        // their transitions no longer match the environment.
        if pass > 0 {
            learner.replay.clear();
        }
        learner.cfg.iterations = learner.iteration + cfg.policy_iters;
        let curve = learner.train(&mut on_curve)?;
        let ncr = curve.last().map_or(f64::NAN, |p| p.eval_ncr);
        out.curve.extend(curve);

        let fresh = evaluate_psi(
            &learner.env,
            &anchor,
            &incumbent,
            &learner.actor,
            &learner.norm,
            cfg.rollouts,
            cfg.rollout_seconds,
            eval_seed,
            workers,
        )?;
        record = record.max(fresh);

        if cfg.generations > 0 {
            let mut es = CmaEs::new(to_z(&incumbent), cfg.initial_step, cfg.samples)
                .with_bounds(vec![[0.0, 1.0]; dim]);
            es.observe_incumbent(to_z(&incumbent), -record);
            let mut rng = rng_from_seed(derive_seed(master, "cma", pass as u64));
            for generation in 0..cfg.generations {
                let zs = es.ask(&mut rng);
                let evals = run_indexed(zs.len(), workers, |i| {
                    evaluate_psi(
                        &learner.env,
                        &anchor,
                        &to_psi(&zs[i]),
                        &learner.actor,
                        &learner.norm,
                        cfg.rollouts,
                        cfg.rollout_seconds,
                        eval_seed,
                        workers,
                    )
                });
                let mut fitness = Vec::with_capacity(zs.len());
                let mut finite_sum = 0.0;
                let mut finite_n = 0usize;
                for v in evals {
                    let v = v?;
                    if v.is_finite() {
                        finite_sum += v;
                        finite_n += 1;
                    }
                    fitness.push(-v);
                }
                es.tell(&zs, &fitness)?;
                record = -es.best().expect("incumbent was observed").1;
                let rec = GenRecord {
                    pass,
                    generation,
                    best_fitness: record,
                    mean_fitness: if finite_n > 0 {
                        finite_sum / finite_n as f64
                    } else {
                        f64::NAN
                    },
                    step_size: es.sigma,
                };
                on_record(&rec);
                out.log.push(rec);
            }
            let (best_z, best_f) = es.best().expect("incumbent was observed").clone();
            record = -best_f;
            incumbent = to_psi(&best_z);
            learner.adopt_actuation(anchor.unpack_psi(&incumbent)?);
        }

        out.passes.push(PassSummary {
            pass,
            ncr,
            objective_start: fresh,
            objective_best: record,
            psi: incumbent.clone(),
        });
    }
    out.psi = incumbent;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::TrainConfig;
    use crate::rigid2d::{CharacterModel, GroundProfile, SimConfig, Simulator};
    use crate::task::{ReferenceMotion, RewardWeights, Task};

    fn fixture_model() -> CharacterModel {
        let doc = r#"{
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
        CharacterModel::from_json_str(doc, "fixture").unwrap()
    }

    fn fixture_env(actuation_doc: &str) -> Env {
        let model = fixture_model();
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
    const MTU_DOC: &str = r#"{"kind": "mtu", "muscles": [
        {"name": "hip_flex", "f0": 400.0, "l_opt": 0.1, "l_se_rest": 0.2,
         "spans": [{"joint": "hip", "r0": 0.05, "q_max": 0.5, "q_rest": 0.0}]},
        {"name": "hip_ext", "f0": 400.0, "l_opt": 0.1, "l_se_rest": 0.2,
         "spans": [{"joint": "hip", "r0": -0.05, "q_max": -0.5, "q_rest": 0.0}]},
        {"name": "gastroc", "f0": 300.0, "l_opt": 0.08, "l_se_rest": 0.15,
         "spans": [{"joint": "hip", "r0": -0.03, "q_max": -0.4, "q_rest": 0.1},
                    {"joint": "ankle", "r0": 0.04, "q_max": 0.3, "q_rest": -0.2}]}
    ]}"#;

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            hidden: vec![12, 8],
            minibatch: 8,
            steps_per_iter: 8,
            iterations: 4,
            eval_every: 1000,
            eval_episodes: 1,
            eval_seconds: 0.5,
            ..TrainConfig::default()
        }
    }

    fn tiny_alt() -> AlternationConfig {
        AlternationConfig {
            passes: 2,
            generations: 2,
            samples: 4,
            rollouts: 2,
            rollout_seconds: 0.5,
            policy_iters: 4,
            initial_step: 0.3,
        }
    }

    #[test]
    fn evaluate_psi_is_deterministic_and_order_invariant() {
        let env = fixture_env(PD_DOC);
        let l = Learner::new(env, tiny_cfg(), 7, Workers::Serial).unwrap();
        let anchor = l.env.actuation.clone();
        let psi = anchor.pack_psi();
        let serial = |seed| {
            evaluate_psi(
                &l.env, &anchor, &psi, &l.actor, &l.norm, 4, 0.5, seed, Workers::Serial,
            )
            .unwrap()
        };
        let a = serial(11);
        let b = serial(11);
        assert_eq!(a.to_bits(), b.to_bits());
        let par = evaluate_psi(
            &l.env, &anchor, &psi, &l.actor, &l.norm, 4, 0.5, 11, Workers::Parallel,
        )
        .unwrap();
        assert_eq!(a.to_bits(), par.to_bits());
        assert_ne!(a.to_bits(), serial(12).to_bits());
    }

    #[test]
    fn evaluate_psi_depends_on_parameters() {
        let env = fixture_env(PD_DOC);
        let l = Learner::new(env, tiny_cfg(), 7, Workers::Serial).unwrap();
        let anchor = l.env.actuation.clone();
        let psi = anchor.pack_psi();
        let mut softer = psi.clone();
        for v in softer.iter_mut() {
            *v *= 0.6;
        }
        let base = evaluate_psi(
            &l.env, &anchor, &psi, &l.actor, &l.norm, 2, 0.5, 3, Workers::Serial,
        )
        .unwrap();
        let moved = evaluate_psi(
            &l.env, &anchor, &softer, &l.actor, &l.norm, 2, 0.5, 3, Workers::Serial,
        )
        .unwrap();
        assert_ne!(base.to_bits(), moved.to_bits());
    }

    #[test]
    fn zero_generations_reduces_to_plain_training() {
        let mk = || Learner::new(fixture_env(PD_DOC), tiny_cfg(), 21, Workers::Serial).unwrap();

        let mut plain = mk();
        plain.train(|_| {}).unwrap();

        let mut alt = mk();
        let cfg = AlternationConfig {
            passes: 1,
            generations: 0,
            policy_iters: alt.cfg.iterations,
            rollouts: 1,
            rollout_seconds: 0.5,
            ..AlternationConfig::default()
        };
        let out = alternate(&mut alt, &cfg, |_| {}, |_| {}).unwrap();

        assert!(out.log.is_empty());
        assert_eq!(alt.iteration, plain.iteration);
        let a = serde_json::to_string(&plain.actor.net).unwrap();
        let b = serde_json::to_string(&alt.actor.net).unwrap();
        assert_eq!(a, b, "training must be unaffected by the wrapper");
        assert_eq!(
            alt.env.actuation.pack_psi(),
            plain.env.actuation.pack_psi()
        );
    }

    #[test]
    fn recorded_best_is_monotone_and_adopted() {
        let mut l = Learner::new(fixture_env(MTU_DOC), tiny_cfg(), 5, Workers::Serial).unwrap();
        let anchor = l.env.actuation.clone();
        let cfg = tiny_alt();
        let mut seen = Vec::new();
        let out = alternate(&mut l, &cfg, |_| {}, |r| seen.push(*r)).unwrap();

        assert_eq!(out.log.len(), cfg.passes * cfg.generations);
        assert_eq!(seen, out.log);
        for w in out.log.windows(2) {
            assert!(
                w[1].best_fitness >= w[0].best_fitness,
                "recorded best regressed: {w:?}"
            );
        }
        for p in &out.passes {
            assert!(p.objective_best >= p.objective_start - 1e-12, "{p:?}");
            assert!(p.ncr.is_finite());
        }
        for w in out.passes.windows(2) {
            assert!(w[1].objective_best >= w[0].objective_best);
        }

        // The learner now runs the adopted parameters, inside the anchor's
        // search box.
        let adopted = l.env.actuation.pack_psi();
        assert_eq!(adopted, out.psi);
        for (v, b) in adopted.iter().zip(anchor.psi_bounds()) {
            assert!(*v >= b[0] - 1e-12 && *v <= b[1] + 1e-12);
        }
        assert_eq!(l.iteration, cfg.passes * cfg.policy_iters);
    }

    #[test]
    fn alternation_is_deterministic() {
        let run = || {
            let mut l =
                Learner::new(fixture_env(MTU_DOC), tiny_cfg(), 9, Workers::Serial).unwrap();
            alternate(&mut l, &tiny_alt(), |_| {}, |_| {}).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.psi, b.psi);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn torque_kind_rejects_search() {
        let mut l = Learner::new(
            fixture_env(r#"{"kind": "torque"}"#),
            tiny_cfg(),
            5,
            Workers::Serial,
        )
        .unwrap();
        let err = alternate(&mut l, &tiny_alt(), |_| {}, |_| {}).unwrap_err();
        assert!(err.is_config_error(), "{err:?}");
    }

    #[test]
    fn pass_csv_shape() {
        let rec = GenRecord {
            pass: 1,
            generation: 3,
            best_fitness: 12.5,
            mean_fitness: 10.25,
            step_size: 0.3,
        };
        assert_eq!(pass_csv_row(&rec), "1,3,12.5,10.25,0.3");
        assert_eq!(pass_csv_header().split(',').count(), 5);
    }
}
