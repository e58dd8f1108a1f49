//! Actor-critic training with positive temporal differences.
//!
//! Each iteration collects a fixed number of control steps under
//! epsilon-mixed exploration, then applies one critic and one actor
//! minibatch update from replay. Only tuples collected with exploration
//! noise feed the actor, and of those only the ones whose temporal
//! difference is positive contribute gradient.

pub mod replay;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Env;
use crate::error::{Error, Result};
use crate::eval::{evaluate_ncr, NcrConfig};
use crate::neural::{GaussianPolicy, Mlp, MomentumSgd, RunningNorm};
use crate::task::EpisodeStatus;
use crate::util::{derive_seed, rng_from_seed, Workers};
pub use replay::{ExperienceTuple, ReplayMemory, TerminalKind};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub momentum: f64,
    pub minibatch: usize,
    pub replay_capacity: usize,
    /// Actor weight decay (theta), critic weight decay (phi).
    pub actor_decay: f64,
    pub critic_decay: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_anneal_iters: usize,
    /// Control steps collected per iteration.
    pub steps_per_iter: usize,
    pub iterations: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub eval_seconds: f64,
    /// Hidden-layer widths for both networks.
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.9,
            actor_lr: 0.001,
            critic_lr: 0.01,
            momentum: 0.9,
            minibatch: 32,
            replay_capacity: 500_000,
            actor_decay: 0.0005,
            critic_decay: 0.0,
            eps_start: 1.0,
            eps_end: 0.2,
            eps_anneal_iters: 500_000,
            steps_per_iter: 32,
            iterations: 1_000_000,
            eval_every: 5_000,
            eval_episodes: 8,
            eval_seconds: 10.0,
            hidden: crate::neural::HIDDEN_SIZES.to_vec(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("gamma", "must lie in [0, 1)"));
        }
        if self.minibatch == 0 || self.steps_per_iter == 0 {
            return Err(Error::config("minibatch/steps_per_iter", "must be positive"));
        }
        if self.replay_capacity < self.minibatch {
            return Err(Error::config("replay_capacity", "smaller than minibatch"));
        }
        if !(self.eps_end <= self.eps_start && (0.0..=1.0).contains(&self.eps_start)) {
            return Err(Error::config("epsilon", "need 0 <= eps_end <= eps_start <= 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be positive"));
        }
        Ok(())
    }
}

/// One learning-curve row.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub tuples: u64,
    pub epsilon: f64,
    /// Mean Bellman loss over the iterations since the previous row.
    pub bellman_loss: f64,
    pub eval_ncr: f64,
}

/// Shared CSV formatting so logs written anywhere compare bitwise.
pub fn curve_csv_header() -> &'static str {
    "iteration,tuples,epsilon,bellman_loss,eval_ncr"
}

pub fn curve_csv_row(p: &CurvePoint) -> String {
    format!(
        "{},{},{},{},{}",
        p.iteration, p.tuples, p.epsilon, p.bellman_loss, p.eval_ncr
    )
}

pub fn write_curve_csv(path: impl AsRef<std::path::Path>, points: &[CurvePoint]) -> Result<()> {
    let mut out = String::from(curve_csv_header());
    out.push('\n');
    for p in points {
        out.push_str(&curve_csv_row(p));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Inverting-gradient rule for bounded actions: when the policy mean has
/// escaped a bound and the empirical gradient pushes it further out, the
/// gradient is replaced by the step back to the bound; otherwise it is
/// kept as is.
pub fn bound_action_gradient(grad: &[f64], mu: &[f64], bounds: &[[f64; 2]]) -> Vec<f64> {
    grad.iter()
        .zip(mu)
        .zip(bounds)
        .map(|((&g, &m), b)| {
            if m < b[0] && g < 0.0 {
                b[0] - m
            } else if m > b[1] && g > 0.0 {
                b[1] - m
            } else {
                g
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct IterStats {
    pub bellman_loss: f64,
    pub critic_stepped: bool,
    pub actor_stepped: bool,
}

pub struct Learner {
    pub env: Env,
    pub cfg: TrainConfig,
    pub actor: GaussianPolicy,
    pub critic: Mlp,
    pub norm: RunningNorm,
    pub actor_opt: MomentumSgd,
    pub critic_opt: MomentumSgd,
    pub replay: ReplayMemory,
    pub iteration: usize,
    pub tuples_seen: u64,
    pub workers: Workers,
    master_seed: u64,
    rng: ChaCha8Rng,
    needs_reset: bool,
    /// Bellman-loss accumulator feeding the next curve row.
    loss_sum: f64,
    loss_count: u64,
}

impl Learner {
    pub fn new(env: Env, cfg: TrainConfig, master_seed: u64, workers: Workers) -> Result<Self> {
        cfg.validate()?;
        let state_dim = env.state_dim();
        let action_dim = env.action_dim();
        let mut actor_sizes = vec![state_dim];
        actor_sizes.extend(&cfg.hidden);
        actor_sizes.push(action_dim);
        let mut critic_sizes = vec![state_dim];
        critic_sizes.extend(&cfg.hidden);
        critic_sizes.push(1);

        let actor_net = Mlp::new(
            &actor_sizes,
            &mut rng_from_seed(derive_seed(master_seed, "actor-init", 0)),
        );
        let critic = Mlp::new(
            &critic_sizes,
            &mut rng_from_seed(derive_seed(master_seed, "critic-init", 0)),
        );
        let actor = GaussianPolicy::new(
            actor_net,
            env.actuation.sigma().to_vec(),
            env.action_bounds().to_vec(),
        );
        let actor_opt = MomentumSgd::new(&actor.net, cfg.actor_lr, cfg.momentum, cfg.actor_decay);
        let critic_opt = MomentumSgd::new(&critic, cfg.critic_lr, cfg.momentum, cfg.critic_decay);
        let replay = ReplayMemory::new(cfg.replay_capacity);
        let rng = rng_from_seed(derive_seed(master_seed, "train", 0));
        Ok(Learner {
            env,
            cfg,
            actor,
            critic,
            norm: RunningNorm::new(state_dim),
            actor_opt,
            critic_opt,
            replay,
            iteration: 0,
            tuples_seen: 0,
            workers,
            master_seed,
            rng,
            needs_reset: true,
            loss_sum: 0.0,
            loss_count: 0,
        })
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Swaps the actuator parameters under the policy. The in-flight
    /// episode is abandoned since its dynamics no longer match.
    pub fn adopt_actuation(&mut self, act: crate::actuation::Actuation) {
        self.env.actuation = act;
        self.needs_reset = true;
    }

    pub(crate) fn rng_state(&self) -> &ChaCha8Rng {
        &self.rng
    }

    /// Reinstates a saved run position. The environment episode is
    /// restarted rather than restored, so the first collected episode
    /// after resume differs from an uninterrupted run.
    pub(crate) fn restore_run_state(
        &mut self,
        iteration: usize,
        tuples_seen: u64,
        rng: ChaCha8Rng,
    ) {
        self.iteration = iteration;
        self.tuples_seen = tuples_seen;
        self.rng = rng;
        self.needs_reset = true;
    }

    /// Piecewise-linear exploration schedule, constant after annealing.
    pub fn epsilon(&self) -> f64 {
        if self.iteration >= self.cfg.eps_anneal_iters {
            return self.cfg.eps_end;
        }
        let t = self.iteration as f64 / self.cfg.eps_anneal_iters as f64;
        self.cfg.eps_start + (self.cfg.eps_end - self.cfg.eps_start) * t
    }

    /// Collects `m` control steps into replay, resampling the initial
    /// state whenever an episode ends.
    pub fn collect_steps(&mut self, m: usize) -> Result<()> {
        let eps = self.epsilon();
        for _ in 0..m {
            if self.needs_reset {
                self.env.reset(&mut self.rng);
                self.needs_reset = false;
            }
            let s = self.env.observe();
            self.norm.observe(&s);
            let exploring = self.rng.random::<f64>() < eps;
            let a = self.actor.sample(&self.norm.normalize(&s), exploring, &mut self.rng)?;
            let clamped = self.actor.clamp(&a);
            let out = self.env.step(&clamped);
            let s_next = self.env.observe();
            let terminal = match out.status {
                EpisodeStatus::Running => TerminalKind::None,
                EpisodeStatus::TimerEnd => TerminalKind::TimerEnd,
                EpisodeStatus::FallEnd => TerminalKind::FallEnd,
            };
            if terminal != TerminalKind::None {
                self.needs_reset = true;
            }
            self.replay.push(ExperienceTuple {
                s,
                a,
                r: out.reward,
                s_next,
                exploring,
                terminal,
            });
            self.tuples_seen += 1;
        }
        Ok(())
    }

    /// Normalized states and Bellman targets for a sampled batch, one
    /// column per tuple. Falls are absorbing (zero future value), timer
    /// endings bootstrap normally.
    fn batch_targets(&self, batch: &[ExperienceTuple]) -> Result<(DMatrix<f64>, Vec<f64>)> {
        let n = batch.len();
        let dim = self.norm.dim();
        let mut states = DMatrix::zeros(dim, n);
        let mut next = DMatrix::zeros(dim, n);
        for (k, t) in batch.iter().enumerate() {
            states.set_column(k, &DVector::from_vec(self.norm.normalize(&t.s)));
            next.set_column(k, &DVector::from_vec(self.norm.normalize(&t.s_next)));
        }
        let v_next = self.critic.forward_batch(&next)?;
        let targets = batch
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let v = match t.terminal {
                    TerminalKind::FallEnd => 0.0,
                    _ => v_next[(0, k)],
                };
                t.r + self.cfg.gamma * v
            })
            .collect();
        Ok((states, targets))
    }

    /// One critic minibatch; returns the mean Bellman loss.
    pub fn critic_update(&mut self) -> Result<f64> {
        let n = self.cfg.minibatch;
        let batch: Vec<ExperienceTuple> = self
            .replay
            .sample(&mut self.rng, n)
            .into_iter()
            .cloned()
            .collect();
        let (states, targets) = self.batch_targets(&batch)?;
        let tape = self.critic.forward_tape_batch(&states)?;
        let mut loss = 0.0;
        // d/dV of 0.5 (y - V)^2, averaged over the batch.
        let upstream = DMatrix::from_fn(1, n, |_, k| {
            let e = tape.output[(0, k)] - targets[k];
            loss += 0.5 * e * e;
            e / n as f64
        });
        let grads = self.critic.backward_batch(&tape, &upstream)?;
        self.critic_opt.step(&mut self.critic, &grads)?;
        Ok(loss / n as f64)
    }

    /// One actor minibatch over exploring tuples. Tuples with a positive
    /// temporal difference push the mean toward their action through the
    /// bounded-gradient rule; when none qualify the optimizer only coasts
    /// on its momentum.
    pub fn actor_update(&mut self) -> Result<bool> {
        let n = self.cfg.minibatch;
        if self.replay.num_exploring() < n {
            return Ok(false);
        }
        let batch: Vec<ExperienceTuple> = self
            .replay
            .sample_exploring(&mut self.rng, n)
            .into_iter()
            .cloned()
            .collect();
        let (states, targets) = self.batch_targets(&batch)?;
        let v = self.critic.forward_batch(&states)?;
        let positive: Vec<usize> = (0..n).filter(|&k| targets[k] - v[(0, k)] > 0.0).collect();
        if positive.is_empty() {
            self.actor_opt.coast(&mut self.actor.net);
            return Ok(true);
        }
        let picked = states.select_columns(&positive);
        let tape = self.actor.net.forward_tape_batch(&picked)?;
        let act_dim = self.actor.net.output_dim();
        let mut upstream = DMatrix::zeros(act_dim, positive.len());
        for (col, &k) in positive.iter().enumerate() {
            debug_assert!(batch[k].exploring);
            let mu: Vec<f64> = tape.output.column(col).iter().copied().collect();
            let da: Vec<f64> = batch[k].a.iter().zip(&mu).map(|(a, m)| a - m).collect();
            let bounded = bound_action_gradient(&da, &mu, &self.actor.bounds);
            // Ascent on mu . Sigma^-1 grad; the optimizer minimizes, so
            // the upstream is negated. The 1/n uses the full minibatch
            // size: non-positive tuples contribute zero, not nothing.
            for i in 0..act_dim {
                upstream[(i, col)] = -bounded[i] / (self.actor.sigma[i] * self.actor.sigma[i] * n as f64);
            }
        }
        let grads = self.actor.net.backward_batch(&tape, &upstream)?;
        self.actor_opt.step(&mut self.actor.net, &grads)?;
        Ok(true)
    }

    /// Collect, one critic update, one actor update.
    pub fn train_iteration(&mut self) -> Result<IterStats> {
        self.collect_steps(self.cfg.steps_per_iter)?;
        let mut stats = IterStats {
            bellman_loss: 0.0,
            critic_stepped: false,
            actor_stepped: false,
        };
        if self.replay.len() >= self.cfg.minibatch {
            stats.bellman_loss = self.critic_update()?;
            stats.critic_stepped = true;
            self.loss_sum += stats.bellman_loss;
            self.loss_count += 1;
            stats.actor_stepped = self.actor_update()?;
        }
        self.iteration += 1;
        Ok(stats)
    }

    /// Deterministic NCR of the current policy; does not touch the
    /// training RNG stream.
    pub fn evaluate(&self) -> crate::eval::NcrReport {
        let cfg = NcrConfig {
            episodes: self.cfg.eval_episodes,
            seconds: self.cfg.eval_seconds,
        };
        evaluate_ncr(
            &self.env,
            &self.actor,
            &self.norm,
            &cfg,
            derive_seed(self.master_seed, "train-eval", self.iteration as u64),
            self.workers,
        )
    }

    /// Evaluates and drains the loss accumulator into a curve row.
    pub fn eval_point(&mut self) -> CurvePoint {
        let loss = if self.loss_count > 0 {
            self.loss_sum / self.loss_count as f64
        } else {
            0.0
        };
        self.loss_sum = 0.0;
        self.loss_count = 0;
        CurvePoint {
            iteration: self.iteration,
            tuples: self.tuples_seen,
            epsilon: self.epsilon(),
            bellman_loss: loss,
            eval_ncr: self.evaluate().ncr,
        }
    }

    /// Runs the full schedule, emitting a curve row every `eval_every`
    /// iterations including iteration 0 and the final iteration.
    pub fn train(&mut self, mut on_point: impl FnMut(&CurvePoint)) -> Result<Vec<CurvePoint>> {
        let mut curve = Vec::new();
        while self.iteration < self.cfg.iterations {
            if self.iteration % self.cfg.eval_every == 0 {
                let p = self.eval_point();
                on_point(&p);
                curve.push(p);
            }
            self.train_iteration()?;
        }
        let p = self.eval_point();
        on_point(&p);
        curve.push(p);
        Ok(curve)
    }
}
