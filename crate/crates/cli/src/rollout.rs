//! `rollout`: trajectory export. Actions at the policy query rate in one
//! file, joint torques at the substep rate in another; MTU runs add
//! per-unit tendon forces.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args;

use gaitlab::checkpoint::Checkpoint;
use gaitlab::env::SubstepRecord;
use gaitlab::task::EpisodeStatus;
use gaitlab::util::{derive_seed, rng_from_seed};
use gaitlab::Result;

use crate::setup::{self, OutputArgs, SetupArgs};

#[derive(Debug, Args)]
pub struct RolloutCmd {
    #[command(flatten)]
    pub setup: SetupArgs,

    #[command(flatten)]
    pub output: OutputArgs,

    /// Trained checkpoint to roll out.
    #[arg(long)]
    pub checkpoint: PathBuf,

    /// Rollout length, seconds.
    #[arg(long, default_value_t = 10.0)]
    pub seconds: f64,

    /// Sample exploratory actions instead of the deterministic mean.
    #[arg(long)]
    pub stochastic: bool,
}

fn csv_row(t: f64, values: &[f64]) -> String {
    let mut row = format!("{t}");
    for v in values {
        row.push(',');
        row.push_str(&format!("{v}"));
    }
    row
}

pub fn run(cmd: &RolloutCmd) -> Result<()> {
    let ex = setup::build_env(&cmd.setup)?;
    let workers = cmd.setup.workers();
    let learner = Checkpoint::load(&cmd.checkpoint)?.restore(ex.env, workers)?;
    let mut env = learner.env.clone();
    let n_act = env.action_dim();
    let n_joint = env.sim.model.num_joints();
    // One l_ce state per muscle; zero for the joint-space kinds.
    let mtu_units = env.actuation.extra_state_dims();

    let dir = setup::run_dir(&cmd.output, &cmd.setup)?;
    setup::write_config(
        &dir,
        "rollout",
        &cmd.setup,
        &ex.actuation_path,
        &learner.cfg,
        serde_json::json!({
            "checkpoint": cmd.checkpoint.display().to_string(),
            "seconds": cmd.seconds,
            "stochastic": cmd.stochastic,
        }),
    )?;

    let mut actions = BufWriter::new(File::create(dir.join("actions.csv"))?);
    let label = if mtu_units > 0 { "act" } else { "a" };
    write!(actions, "t")?;
    for i in 0..n_act {
        write!(actions, ",{label}{i}")?;
    }
    writeln!(actions)?;

    let mut torques = BufWriter::new(File::create(dir.join("torques.csv"))?);
    write!(torques, "t")?;
    for i in 0..n_joint {
        write!(torques, ",tau{i}")?;
    }
    for i in 0..mtu_units {
        write!(torques, ",f_mtu{i}")?;
    }
    writeln!(torques)?;

    let seed = cmd.setup.seed;
    let mut reset_rng = rng_from_seed(derive_seed(seed, "rollout-reset", 0));
    let mut noise_rng = rng_from_seed(derive_seed(seed, "rollout-noise", 0));
    env.reset(&mut reset_rng);
    env.set_episode_duration(cmd.seconds + 1.0);

    let dt = env.task.control_dt;
    let steps = (cmd.seconds / dt).round() as usize;
    let mut trace: Vec<SubstepRecord> = Vec::new();
    let mut action_rows = 0usize;
    let mut torque_rows = 0usize;
    for k in 0..steps {
        let s = learner.norm.normalize(&env.observe());
        let a = if cmd.stochastic {
            learner.actor.sample(&s, true, &mut noise_rng)?
        } else {
            let mean = learner.actor.mean(&s)?;
            learner.actor.clamp(mean.as_slice())
        };
        writeln!(actions, "{}", csv_row(k as f64 * dt, &a))?;
        action_rows += 1;

        trace.clear();
        let out = env.step_traced(&a, &mut trace);
        for r in &trace {
            let mut vals = r.torques.clone();
            vals.extend(&r.mtu_forces);
            writeln!(torques, "{}", csv_row(r.time, &vals))?;
            torque_rows += 1;
        }
        if out.status == EpisodeStatus::FallEnd {
            eprintln!("character fell at t = {:.2} s", (k + 1) as f64 * dt);
            break;
        }
    }
    actions.flush()?;
    torques.flush()?;

    println!(
        "wrote {action_rows} action rows and {torque_rows} torque rows to {}",
        dir.display()
    );
    Ok(())
}
