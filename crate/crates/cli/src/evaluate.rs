//! `eval`: benchmark protocols over a trained checkpoint. Each protocol
//! produces report rows written to `report.csv` and echoed to stdout.

use std::path::PathBuf;

use clap::{Args, ValueEnum};

use gaitlab::checkpoint::Checkpoint;
use gaitlab::eval::{
    evaluate_ncr, generate_terrain, perturb_eval, write_report_csv, NcrConfig, PerturbConfig,
    ReportRow, TerrainConfig, TerrainKind,
};
use gaitlab::util::{derive_seed, run_indexed};
use gaitlab::{Error, Result};

use crate::setup::{self, OutputArgs, SetupArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Protocol {
    /// Mean normalized cumulative reward over independent episodes.
    Ncr,
    /// NCR under random horizontal trunk pulses, one row per magnitude.
    Perturb,
    /// NCR on procedurally generated non-flat ground.
    Terrain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TerrainArg {
    Bumps,
    Slopes,
}

#[derive(Debug, Args)]
pub struct EvalCmd {
    #[command(flatten)]
    pub setup: SetupArgs,

    #[command(flatten)]
    pub output: OutputArgs,

    /// Trained checkpoint to evaluate.
    #[arg(long)]
    pub checkpoint: PathBuf,

    #[arg(long, value_enum)]
    pub protocol: Protocol,

    /// Episode count; defaults to the protocol's standard budget.
    #[arg(long)]
    pub episodes: Option<usize>,

    /// Episode length, seconds; defaults per protocol.
    #[arg(long)]
    pub seconds: Option<f64>,

    /// Pulse force magnitudes, N (perturb protocol).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub magnitudes: Vec<f64>,

    /// Terrain flavor (terrain protocol).
    #[arg(long, value_enum)]
    pub kind: Option<TerrainArg>,

    /// Bump height bound, m (terrain protocol).
    #[arg(long)]
    pub hmax: Option<f64>,

    /// Slope bound, rise over run (terrain protocol).
    #[arg(long)]
    pub smax: Option<f64>,

    /// Independent terrain draws the episode budget is spread over.
    #[arg(long, default_value_t = 8)]
    pub terrains: usize,

    /// Evaluation seed; defaults to the checkpoint's master seed.
    #[arg(long)]
    pub eval_seed: Option<u64>,
}

pub fn run(cmd: &EvalCmd) -> Result<()> {
    let ex = setup::build_env(&cmd.setup)?;
    let workers = cmd.setup.workers();
    let ck = Checkpoint::load(&cmd.checkpoint)?;
    let master = ck.master_seed;
    let learner = ck.restore(ex.env, workers)?;
    let seed = cmd.eval_seed.unwrap_or(master);
    let policy = cmd
        .checkpoint
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("policy")
        .to_string();

    let rows = match cmd.protocol {
        Protocol::Ncr => {
            let cfg = NcrConfig {
                episodes: cmd.episodes.unwrap_or(32),
                seconds: cmd.seconds.unwrap_or(10.0),
            };
            let rep = evaluate_ncr(
                &learner.env,
                &learner.actor,
                &learner.norm,
                &cfg,
                derive_seed(seed, "eval-ncr", 0),
                workers,
            );
            vec![ReportRow {
                policy,
                protocol: "ncr".into(),
                parameter: cfg.seconds,
                mean: rep.ncr,
                stderr: rep.stderr,
                episodes: cfg.episodes,
                seed,
            }]
        }
        Protocol::Perturb => {
            let cfg = PerturbConfig {
                episodes: cmd.episodes.unwrap_or(128),
                seconds: cmd.seconds.unwrap_or(20.0),
                ..PerturbConfig::default()
            };
            let mags = if cmd.magnitudes.is_empty() {
                vec![0.0, 50.0, 100.0]
            } else {
                cmd.magnitudes.clone()
            };
            let reps = perturb_eval(
                &learner.env,
                &learner.actor,
                &learner.norm,
                &cfg,
                &mags,
                derive_seed(seed, "eval-perturb", 0),
                workers,
            );
            mags.iter()
                .zip(reps)
                .map(|(&mag, rep)| ReportRow {
                    policy: policy.clone(),
                    protocol: "perturb".into(),
                    parameter: mag,
                    mean: rep.ncr,
                    stderr: rep.stderr,
                    episodes: cfg.episodes,
                    seed,
                })
                .collect()
        }
        Protocol::Terrain => {
            let kind = match cmd.kind {
                Some(TerrainArg::Bumps) => TerrainKind::Bumps,
                Some(TerrainArg::Slopes) => TerrainKind::Slopes,
                None => {
                    return Err(Error::config("kind", "terrain protocol needs --kind"));
                }
            };
            let mut tcfg = TerrainConfig {
                kind,
                ..TerrainConfig::default()
            };
            if let Some(h) = cmd.hmax {
                tcfg.h_max = h;
            }
            if let Some(s) = cmd.smax {
                tcfg.s_max = s;
            }
            if cmd.terrains == 0 {
                return Err(Error::config("terrains", "must be positive"));
            }
            let total = cmd.episodes.unwrap_or(32);
            let per = total.div_ceil(cmd.terrains);
            let cfg = NcrConfig {
                episodes: per,
                seconds: cmd.seconds.unwrap_or(10.0),
            };
            // One report per independent terrain draw, pooled over all
            // episodes so a single unlucky profile cannot dominate.
            let reports = run_indexed(cmd.terrains, workers, |ti| {
                let mut env = learner.env.clone();
                env.sim.ground = generate_terrain(&tcfg, derive_seed(seed, "terrain", ti as u64));
                evaluate_ncr(
                    &env,
                    &learner.actor,
                    &learner.norm,
                    &cfg,
                    derive_seed(seed, "terrain-episodes", ti as u64),
                    gaitlab::util::Workers::Serial,
                )
            });
            let pooled: Vec<f64> = reports
                .iter()
                .flat_map(|r| {
                    let max = r.steps_per_episode as f64;
                    r.per_episode.iter().map(move |&s| s / max)
                })
                .collect();
            let n = pooled.len() as f64;
            let mean = pooled.iter().sum::<f64>() / n;
            let var = pooled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let parameter = match kind {
                TerrainKind::Bumps => tcfg.h_max,
                TerrainKind::Slopes => tcfg.s_max,
            };
            vec![ReportRow {
                policy,
                protocol: format!("terrain-{}", if kind == TerrainKind::Bumps { "bumps" } else { "slopes" }),
                parameter,
                mean,
                stderr: (var / n).sqrt(),
                episodes: pooled.len(),
                seed,
            }]
        }
    };

    let dir = setup::run_dir(&cmd.output, &cmd.setup)?;
    setup::write_config(
        &dir,
        "eval",
        &cmd.setup,
        &ex.actuation_path,
        &learner.cfg,
        serde_json::json!({
            "checkpoint": cmd.checkpoint.display().to_string(),
            "protocol": format!("{:?}", cmd.protocol),
            "eval_seed": seed,
        }),
    )?;
    write_report_csv(dir.join("report.csv"), &rows)?;

    println!("policy,protocol,parameter,mean,stderr,episodes,seed");
    for r in &rows {
        println!(
            "{},{},{},{},{},{},{}",
            r.policy, r.protocol, r.parameter, r.mean, r.stderr, r.episodes, r.seed
        );
    }
    Ok(())
}
