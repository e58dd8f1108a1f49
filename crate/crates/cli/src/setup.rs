//! Shared experiment plumbing: asset resolution, environment assembly,
//! run directories, and the resolved-config snapshot every command drops
//! next to its artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use sha2::{Digest, Sha256};

use gaitlab::actuation::Actuation;
use gaitlab::env::Env;
use gaitlab::learner::TrainConfig;
use gaitlab::rigid2d::{CharacterModel, GroundProfile, SimConfig, Simulator};
use gaitlab::task::{ReferenceMotion, RewardWeights, StateVariant, Task};
use gaitlab::util::Workers;
use gaitlab::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StateArg {
    /// Reference pose features at the upcoming control step.
    Target,
    /// Bare cycle-phase scalar instead of target features.
    Phase,
}

impl From<StateArg> for StateVariant {
    fn from(s: StateArg) -> StateVariant {
        match s {
            StateArg::Target => StateVariant::TargetFeatures,
            StateArg::Phase => StateVariant::Phase,
        }
    }
}

#[derive(Debug, Args)]
pub struct SetupArgs {
    /// Character model file.
    #[arg(long)]
    pub character: PathBuf,

    /// Reference motion file.
    #[arg(long)]
    pub motion: PathBuf,

    /// Actuation: a kind shorthand (tor | vel | pd | mtu) resolved to
    /// `<character>_<kind>.json` next to the character file, or a path.
    #[arg(long)]
    pub actuation: String,

    /// Policy input variant.
    #[arg(long, value_enum, default_value_t = StateArg::Target)]
    pub state: StateArg,

    /// Master seed; every stream any command draws derives from it.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,

    /// Worker cap for episode/candidate batches. 1 runs everything on the
    /// calling thread; 0 uses all cores. Results are identical either way.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,

    /// Policy query rate override, Hz. Must divide the 600 Hz substep rate.
    #[arg(long)]
    pub control_hz: Option<f64>,
}

impl SetupArgs {
    pub fn workers(&self) -> Workers {
        Workers::from_count(self.workers)
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output directory; overrides the runs-root/name scheme.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Run name under the runs root (env GAITLAB_RUNS, default `runs`).
    #[arg(long)]
    pub name: Option<String>,
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(Error::config(path.display().to_string(), "no such file"));
    }
    Ok(())
}

/// A shorthand kind maps to a sibling of the character file; anything
/// with a path separator or .json suffix is taken literally.
pub fn resolve_actuation(character: &Path, spec: &str) -> Result<PathBuf> {
    let path = if spec.contains('/') || spec.ends_with(".json") {
        PathBuf::from(spec)
    } else {
        let stem = character
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::config("character", "path has no file stem"))?;
        character.with_file_name(format!("{stem}_{spec}.json"))
    };
    require_file(&path)?;
    Ok(path)
}

pub struct Experiment {
    pub env: Env,
    pub actuation_path: PathBuf,
}

pub fn build_env(args: &SetupArgs) -> Result<Experiment> {
    require_file(&args.character)?;
    require_file(&args.motion)?;
    let model = CharacterModel::load(&args.character)?;
    let actuation_path = resolve_actuation(&args.character, &args.actuation)?;
    let actuation = Actuation::load(&actuation_path, &model)?;
    let motion = ReferenceMotion::load(&args.motion)?;
    let sim = Simulator::new(model, SimConfig::default(), GroundProfile::default());
    let mut task = Task::new(motion, RewardWeights::default());
    task.variant = args.state.into();
    let mut env = Env::new(sim, task, actuation)?;
    if let Some(hz) = args.control_hz {
        env.set_control_rate(hz)?;
    }
    Ok(Experiment {
        env,
        actuation_path,
    })
}

fn default_name(setup: &SetupArgs) -> String {
    let motion = setup
        .motion
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("motion");
    let act = Path::new(&setup.actuation)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(&setup.actuation);
    format!("{motion}_{act}_s{}", setup.seed)
}

/// Resolves and creates the run directory.
pub fn run_dir(output: &OutputArgs, setup: &SetupArgs) -> Result<PathBuf> {
    let dir = match &output.out {
        Some(d) => d.clone(),
        None => {
            let root = std::env::var("GAITLAB_RUNS").unwrap_or_else(|_| "runs".into());
            let name = output.name.clone().unwrap_or_else(|| default_name(setup));
            PathBuf::from(root).join(name)
        }
    };
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Writes `config.json`: the resolved inputs, the training configuration,
/// command-specific extras, and a hash over all of it. Returns the hash.
pub fn write_config(
    dir: &Path,
    command: &str,
    setup: &SetupArgs,
    actuation_path: &Path,
    train: &TrainConfig,
    extra: serde_json::Value,
) -> Result<String> {
    let resolved = serde_json::json!({
        "command": command,
        "character": setup.character.display().to_string(),
        "motion": setup.motion.display().to_string(),
        "actuation": actuation_path.display().to_string(),
        "state": match setup.state {
            StateArg::Target => "target",
            StateArg::Phase => "phase",
        },
        "master_seed": setup.seed,
        "workers": setup.workers,
        "control_hz": setup.control_hz,
        "train": train,
        "extra": extra,
    });
    let hash = config_hash(&resolved);
    let mut doc = resolved;
    doc["config_hash"] = serde_json::Value::String(hash.clone());
    fs::write(dir.join("config.json"), format!("{doc:#}\n"))?;
    Ok(hash)
}

pub fn config_hash(doc: &serde_json::Value) -> String {
    let mut h = Sha256::new();
    h.update(doc.to_string().as_bytes());
    format!("{:x}", h.finalize())
}

#[derive(Debug, Args)]
pub struct ValidateCmd {
    #[command(flatten)]
    pub setup: SetupArgs,

    #[command(flatten)]
    pub train: crate::train::TrainArgs,
}

/// Resolves everything a run would use and prints the cross-checked
/// dimensions without training a step.
pub fn validate(cmd: &ValidateCmd) -> Result<()> {
    let ex = build_env(&cmd.setup)?;
    let cfg = cmd.train.to_config()?;
    cfg.validate()?;
    let env = &ex.env;
    let doc = serde_json::json!({
        "character": cmd.setup.character.display().to_string(),
        "motion": cmd.setup.motion.display().to_string(),
        "actuation": ex.actuation_path.display().to_string(),
        "train": &cfg,
    });
    println!("character        {}", cmd.setup.character.display());
    println!("  links          {}", env.sim.model.num_links());
    println!("  joints         {}", env.sim.model.num_joints());
    println!("motion           {}", cmd.setup.motion.display());
    println!(
        "  cycle          {} s, {} frames",
        env.task.motion.cycle_duration,
        env.task.motion.frames.len()
    );
    println!("actuation        {}", ex.actuation_path.display());
    println!("state dim        {}", env.state_dim());
    println!("action dim       {}", env.action_dim());
    println!("psi dim          {}", env.actuation.psi_len());
    println!("substeps/control {}", env.substeps_per_control());
    println!("config hash      {}", config_hash(&doc));
    Ok(())
}
