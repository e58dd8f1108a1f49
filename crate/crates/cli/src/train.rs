//! `train`: policy training with a streaming learning curve and a rolling
//! crash-recovery checkpoint.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;

use gaitlab::checkpoint::Checkpoint;
use gaitlab::learner::{curve_csv_header, curve_csv_row, CurvePoint, Learner, TrainConfig};
use gaitlab::{Error, Result};

use crate::setup::{self, OutputArgs, SetupArgs};

/// Training-configuration overrides; unset flags keep the defaults.
#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training iterations.
    #[arg(long, default_value_t = 1_000_000)]
    pub iters: usize,

    #[arg(long)]
    pub gamma: Option<f64>,

    #[arg(long)]
    pub actor_lr: Option<f64>,

    #[arg(long)]
    pub critic_lr: Option<f64>,

    #[arg(long)]
    pub minibatch: Option<usize>,

    #[arg(long)]
    pub replay: Option<usize>,

    /// Iterations over which exploration anneals to its floor.
    #[arg(long)]
    pub eps_anneal: Option<usize>,

    /// Comma-separated hidden layer widths, e.g. 512,256.
    #[arg(long)]
    pub hidden: Option<String>,

    #[arg(long)]
    pub eval_every: Option<usize>,

    #[arg(long)]
    pub eval_episodes: Option<usize>,

    #[arg(long)]
    pub eval_seconds: Option<f64>,
}

impl TrainArgs {
    pub fn to_config(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig {
            iterations: self.iters,
            ..TrainConfig::default()
        };
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.actor_lr {
            cfg.actor_lr = v;
        }
        if let Some(v) = self.critic_lr {
            cfg.critic_lr = v;
        }
        if let Some(v) = self.minibatch {
            cfg.minibatch = v;
        }
        if let Some(v) = self.replay {
            cfg.replay_capacity = v;
        }
        if let Some(v) = self.eps_anneal {
            cfg.eps_anneal_iters = v;
        }
        if let Some(spec) = &self.hidden {
            cfg.hidden = parse_hidden(spec)?;
        }
        if let Some(v) = self.eval_every {
            cfg.eval_every = v;
        }
        if let Some(v) = self.eval_episodes {
            cfg.eval_episodes = v;
        }
        if let Some(v) = self.eval_seconds {
            cfg.eval_seconds = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_hidden(spec: &str) -> Result<Vec<usize>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::config("hidden", format!("bad layer width {s:?}")))
        })
        .collect()
}

#[derive(Debug, Args)]
pub struct TrainCmd {
    #[command(flatten)]
    pub setup: SetupArgs,

    #[command(flatten)]
    pub train: TrainArgs,

    #[command(flatten)]
    pub output: OutputArgs,

    /// Continue from a saved checkpoint instead of initializing fresh.
    #[arg(long)]
    pub resume: Option<PathBuf>,

    /// Iterations between rolling checkpoint writes.
    #[arg(long, default_value_t = 25_000)]
    pub checkpoint_every: usize,
}

/// Appends learning-curve rows as they arrive so a crash loses nothing
/// past the last evaluation point. Training in checkpoint-sized chunks
/// re-evaluates at every chunk boundary; rows at an already-written
/// iteration are dropped so the file is independent of the chunking.
pub struct CurveFile {
    out: BufWriter<File>,
    last: Option<usize>,
}

impl CurveFile {
    pub fn create(path: &Path) -> Result<CurveFile> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", curve_csv_header())?;
        Ok(CurveFile { out, last: None })
    }

    /// Reopens for append on resume; writes the header only if new.
    pub fn append(path: &Path) -> Result<CurveFile> {
        let last = if path.is_file() {
            last_iteration(&std::fs::read_to_string(path)?)
        } else {
            None
        };
        let fresh = last.is_none();
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut out = BufWriter::new(file);
        if fresh {
            writeln!(out, "{}", curve_csv_header())?;
        }
        Ok(CurveFile { out, last })
    }

    pub fn push(&mut self, p: &CurvePoint) {
        if self.last.is_some_and(|last| p.iteration <= last) {
            return;
        }
        self.last = Some(p.iteration);
        // Curve rows are sparse (one per eval); flush each so the file
        // tracks the run.
        let _ = writeln!(self.out, "{}", curve_csv_row(p));
        let _ = self.out.flush();
    }
}

fn last_iteration(csv: &str) -> Option<usize> {
    csv.lines()
        .rev()
        .find_map(|l| l.split(',').next()?.parse::<usize>().ok())
}

pub fn run(cmd: &TrainCmd) -> Result<()> {
    let ex = setup::build_env(&cmd.setup)?;
    let workers = cmd.setup.workers();
    let mut learner = match &cmd.resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let mut l = ck.restore(ex.env, workers)?;
            l.cfg.iterations = cmd.train.iters;
            l
        }
        None => Learner::new(ex.env, cmd.train.to_config()?, cmd.setup.seed, workers)?,
    };

    let dir = setup::run_dir(&cmd.output, &cmd.setup)?;
    let hash = setup::write_config(
        &dir,
        "train",
        &cmd.setup,
        &ex.actuation_path,
        &learner.cfg,
        serde_json::json!({ "resume": cmd.resume.as_ref().map(|p| p.display().to_string()) }),
    )?;

    let curve_path = dir.join("curve.csv");
    let mut curve = if cmd.resume.is_some() {
        CurveFile::append(&curve_path)?
    } else {
        CurveFile::create(&curve_path)?
    };

    let target = cmd.train.iters;
    let ck_path = dir.join("checkpoint.json");
    while learner.iteration < target {
        let stop = (learner.iteration + cmd.checkpoint_every).min(target);
        learner.cfg.iterations = stop;
        learner.train(|p: &CurvePoint| curve.push(p))?;
        Checkpoint::capture(&learner).save(&ck_path)?;
    }
    learner.cfg.iterations = target;

    println!(
        "trained to iteration {} (config {}); artifacts in {}",
        learner.iteration,
        &hash[..12],
        dir.display()
    );
    Ok(())
}
