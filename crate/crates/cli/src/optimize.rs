//! `optimize-actuators`: alternation between policy training and
//! actuator-parameter search, with per-pass logs and parameter snapshots.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;

use gaitlab::actuator_opt::{alternate, pass_csv_header, pass_csv_row, AlternationConfig};
use gaitlab::checkpoint::Checkpoint;
use gaitlab::learner::Learner;
use gaitlab::Result;

use crate::setup::{self, OutputArgs, SetupArgs};
use crate::train::{CurveFile, TrainArgs};

#[derive(Debug, Args)]
pub struct OptimizeCmd {
    #[command(flatten)]
    pub setup: SetupArgs,

    #[command(flatten)]
    pub train: TrainArgs,

    #[command(flatten)]
    pub output: OutputArgs,

    /// Alternation passes.
    #[arg(long, default_value_t = 6)]
    pub passes: usize,

    /// Search generations per pass.
    #[arg(long, default_value_t = 250)]
    pub generations: usize,

    /// Candidates per generation.
    #[arg(long, default_value_t = 16)]
    pub samples: usize,

    /// Rollouts averaged per candidate evaluation.
    #[arg(long, default_value_t = 16)]
    pub rollouts: usize,

    /// Rollout length, seconds.
    #[arg(long, default_value_t = 10.0)]
    pub rollout_seconds: f64,

    /// Training iterations per pass.
    #[arg(long, default_value_t = 250_000)]
    pub policy_iters: usize,

    /// Initial search step in normalized parameter coordinates.
    #[arg(long, default_value_t = 0.3)]
    pub step: f64,

    /// Continue from a saved checkpoint instead of initializing fresh.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

/// On failure both halves of the optimization state are still written so
/// nothing learned is lost.
fn dump_state(dir: &Path, learner: &Learner, suffix: &str) -> Result<()> {
    Checkpoint::capture(learner).save(dir.join(format!("checkpoint{suffix}.json")))?;
    std::fs::write(
        dir.join(format!("actuation{suffix}.json")),
        learner.env.actuation.to_json_string(),
    )?;
    Ok(())
}

pub fn run(cmd: &OptimizeCmd) -> Result<()> {
    let ex = setup::build_env(&cmd.setup)?;
    let workers = cmd.setup.workers();
    let anchor = ex.env.actuation.clone();
    let mut learner = match &cmd.resume {
        Some(path) => Checkpoint::load(path)?.restore(ex.env, workers)?,
        None => Learner::new(ex.env, cmd.train.to_config()?, cmd.setup.seed, workers)?,
    };

    let alt = AlternationConfig {
        passes: cmd.passes,
        generations: cmd.generations,
        samples: cmd.samples,
        rollouts: cmd.rollouts,
        rollout_seconds: cmd.rollout_seconds,
        policy_iters: cmd.policy_iters,
        initial_step: cmd.step,
    };
    alt.validate()?;

    let dir = setup::run_dir(&cmd.output, &cmd.setup)?;
    setup::write_config(
        &dir,
        "optimize-actuators",
        &cmd.setup,
        &ex.actuation_path,
        &learner.cfg,
        serde_json::json!({
            "alternation": {
                "passes": alt.passes,
                "generations": alt.generations,
                "samples": alt.samples,
                "rollouts": alt.rollouts,
                "rollout_seconds": alt.rollout_seconds,
                "policy_iters": alt.policy_iters,
                "initial_step": alt.initial_step,
            },
            "resume": cmd.resume.as_ref().map(|p| p.display().to_string()),
        }),
    )?;

    let mut curve = CurveFile::create(&dir.join("curve.csv"))?;
    let mut passes_out = BufWriter::new(File::create(dir.join("passes.csv"))?);
    writeln!(passes_out, "{}", pass_csv_header())?;

    let outcome = alternate(
        &mut learner,
        &alt,
        |p: &gaitlab::learner::CurvePoint| curve.push(p),
        |rec| {
            let _ = writeln!(passes_out, "{}", pass_csv_row(rec));
            let _ = passes_out.flush();
        },
    );
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            // Keep whatever the run produced: policy checkpoint plus the
            // actuator parameters in force when it stopped.
            dump_state(&dir, &learner, "_fail")?;
            eprintln!("optimization stopped; state saved under {}", dir.display());
            return Err(e);
        }
    };

    dump_state(&dir, &learner, "")?;
    for p in &outcome.passes {
        let act = anchor.unpack_psi(&p.psi)?;
        std::fs::write(
            dir.join(format!("actuation_pass{}.json", p.pass + 1)),
            act.to_json_string(),
        )?;
    }

    for p in &outcome.passes {
        println!(
            "pass {}: ncr {:.4}, objective {:.3} -> {:.3}",
            p.pass + 1,
            p.ncr,
            p.objective_start,
            p.objective_best
        );
    }
    println!("artifacts in {}", dir.display());
    Ok(())
}
