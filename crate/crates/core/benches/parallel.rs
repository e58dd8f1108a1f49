//! Serial vs rayon throughput on the two embarrassingly parallel
//! workloads: evaluation episodes and actuator-candidate rollouts. Both
//! paths produce identical numbers; this measures wall time only.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use gaitlab::actuation::Actuation;
use gaitlab::actuator_opt::evaluate_psi;
use gaitlab::env::Env;
use gaitlab::eval::{evaluate_ncr, NcrConfig};
use gaitlab::learner::{Learner, TrainConfig};
use gaitlab::rigid2d::{CharacterModel, GroundProfile, SimConfig, Simulator};
use gaitlab::task::{ReferenceMotion, RewardWeights, Task};
use gaitlab::util::Workers;

fn asset(name: &str) -> String {
    format!("{}/../../assets/{name}", env!("CARGO_MANIFEST_DIR"))
}

/// Bundled biped with an untrained policy; the episode workload does not
/// depend on policy quality, only on network and simulation cost.
fn learner(kind: &str) -> Learner {
    let model = CharacterModel::load(asset("biped7.json")).unwrap();
    let actuation = Actuation::load(asset(&format!("biped7_{kind}.json")), &model).unwrap();
    let motion = ReferenceMotion::load(asset("biped_walk.json")).unwrap();
    let sim = Simulator::new(model, SimConfig::default(), GroundProfile::default());
    let task = Task::new(motion, RewardWeights::default());
    let env = Env::new(sim, task, actuation).unwrap();
    let cfg = TrainConfig {
        hidden: vec![64, 32],
        ..TrainConfig::default()
    };
    Learner::new(env, cfg, 7, Workers::Serial).unwrap()
}

const MODES: [(&str, Workers); 2] = [
    ("serial", Workers::Serial),
    ("parallel", Workers::Parallel),
];

fn bench_ncr_episodes(c: &mut Criterion) {
    let l = learner("pd");
    let cfg = NcrConfig {
        episodes: 8,
        seconds: 2.0,
    };
    let mut group = c.benchmark_group("ncr_8_episodes");
    group.sample_size(20);
    for (label, workers) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(label), &workers, |b, &w| {
            b.iter(|| evaluate_ncr(&l.env, &l.actor, &l.norm, &cfg, 11, w));
        });
    }
    group.finish();
}

fn bench_candidate_rollouts(c: &mut Criterion) {
    let l = learner("mtu");
    let psi = l.env.actuation.pack_psi();
    let mut group = c.benchmark_group("psi_8_rollouts");
    group.sample_size(20);
    for (label, workers) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(label), &workers, |b, &w| {
            b.iter(|| {
                evaluate_psi(
                    &l.env,
                    &l.env.actuation,
                    &psi,
                    &l.actor,
                    &l.norm,
                    8,
                    1.0,
                    11,
                    w,
                )
                .unwrap()
            });
        });
    }
    group.finish();
}

criterion_group!(benches, bench_ncr_episodes, bench_candidate_rollouts);
criterion_main!(benches);
