//! Command-line front end: training, evaluation protocols, actuator
//! optimization, and trajectory export over the gaitlab core.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error.

mod evaluate;
mod optimize;
mod rollout;
mod setup;
mod train;

use clap::{Parser, Subcommand};
use gaitlab::Result;

#[derive(Parser)]
#[command(name = "gaitlab", version, about = "Motion-imitation training and benchmarks for planar characters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a tracking policy.
    Train(train::TrainCmd),
    /// Run a benchmark protocol over a trained checkpoint.
    Eval(evaluate::EvalCmd),
    /// Alternate policy training with actuator-parameter search.
    OptimizeActuators(optimize::OptimizeCmd),
    /// Export action and torque trajectories from a checkpoint.
    Rollout(rollout::RolloutCmd),
    /// Resolve and cross-check a configuration without running anything.
    ValidateConfig(setup::ValidateCmd),
}

impl Command {
    fn setup(&self) -> &setup::SetupArgs {
        match self {
            Command::Train(c) => &c.setup,
            Command::Eval(c) => &c.setup,
            Command::OptimizeActuators(c) => &c.setup,
            Command::Rollout(c) => &c.setup,
            Command::ValidateConfig(c) => &c.setup,
        }
    }
}

/// Caps rayon's pool before any parallel section spawns it. Worker count
/// never affects results, only wall time.
#[cfg(feature = "parallel")]
fn cap_workers(n: usize) {
    if n > 1 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

#[cfg(not(feature = "parallel"))]
fn cap_workers(_n: usize) {}

fn dispatch(cli: &Cli) -> Result<()> {
    cap_workers(cli.command.setup().workers);
    match &cli.command {
        Command::Train(c) => train::run(c),
        Command::Eval(c) => evaluate::run(c),
        Command::OptimizeActuators(c) => optimize::run(c),
        Command::Rollout(c) => rollout::run(c),
        Command::ValidateConfig(c) => setup::validate(c),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(&cli) {
        eprintln!("error: {e}");
        std::process::exit(if e.is_config_error() { 2 } else { 1 });
    }
}
