//! Clipped-surrogate policy optimization over rollout batches, and the
//! outer training loop with its convergence log.

use crate::env::{EnvConfig, Outcome};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;

use super::nn::{backward_episode, forward_step, Gradients, PolicyParams, RecurrentState, Shapes};
use super::rollout::{collect_rollouts, compute_gae, greedy_rollout, EpisodeRecord, RolloutBatch};
use super::AgentError;

#[derive(Clone, Copy, Debug)]
pub struct PPOConfig {
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub lr: f64,
    pub epochs: u32,
    /// Episodes per gradient minibatch.
    pub minibatch_episodes: usize,
    /// Episodes collected per iteration.
    pub episodes_per_batch: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    /// Total episodes to collect over the whole run.
    pub trajectory_budget: u64,
    pub seed: u64,
}

impl Default for PPOConfig {
    fn default() -> PPOConfig {
        PPOConfig {
            clip: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            lr: 3e-4,
            epochs: 4,
            minibatch_episodes: 16,
            episodes_per_batch: 64,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            trajectory_budget: 50_000,
            seed: 0,
        }
    }
}

impl PPOConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |msg: String| Err(AgentError::InvalidConfig(msg));
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad(format!("clip must be in (0,1), got {}", self.clip));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must be in (0,1], got {}", self.gamma));
        }
        if !(self.lambda >= 0.0 && self.lambda <= 1.0) {
            return bad(format!("lambda must be in [0,1], got {}", self.lambda));
        }
        if self.lr <= 0.0 || self.epochs == 0 || self.minibatch_episodes == 0 {
            return bad("learning rate, epochs, and minibatch size must be positive".into());
        }
        if self.episodes_per_batch == 0 || self.trajectory_budget == 0 {
            return bad("batch size and trajectory budget must be positive".into());
        }
        Ok(())
    }
}

/// Averages over the minibatches of one update.
#[derive(Clone, Copy, Debug, Default)]
pub struct Diagnostics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub grad_norm: f64,
}

/// Adam over the flattened parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(len: usize) -> Adam {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grads[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grads[i] * grads[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + Self::EPS);
        }
    }
}

/// Per-step constants the update treats as data: sampling-time log
/// probability, normalized advantage, and value target.
#[derive(Clone, Copy, Debug)]
pub(crate) struct StepConsts {
    pub old_log_prob: f64,
    pub advantage: f64,
    pub target: f64,
}

pub(crate) struct MiniStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_count: usize,
    pub kl_sum: f64,
    pub steps: usize,
}

/// Loss and gradients of the PPO objective on a set of episodes, with the
/// recurrent state rebuilt from each episode's start:
///
/// ```text
/// L = -mean_t min(rho_t A_t, clip(rho_t, 1-eps, 1+eps) A_t)
///     + c_v mean_t (v_t - target_t)^2  -  c_e mean_t H_t
/// ```
pub(crate) fn minibatch_loss(
    params: &PolicyParams,
    episodes: &[&EpisodeRecord],
    consts: &[&[StepConsts]],
    cfg: &PPOConfig,
) -> Result<(f64, Gradients, MiniStats), AgentError> {
    let n_steps: usize = episodes.iter().map(|e| e.steps.len()).sum();
    let scale = 1.0 / n_steps.max(1) as f64;
    let mut grads = Gradients::zeros(params.shapes);
    let mut loss = 0.0;
    let mut stats = MiniStats {
        policy_loss: 0.0,
        value_loss: 0.0,
        entropy: 0.0,
        clip_count: 0,
        kl_sum: 0.0,
        steps: n_steps,
    };

    for (ep, ep_consts) in episodes.iter().zip(consts) {
        let ep_consts = *ep_consts;
        let mut state = RecurrentState::zeros(params.shapes.h);
        let mut caches = Vec::with_capacity(ep.steps.len());
        let mut d_logits = Vec::with_capacity(ep.steps.len());
        let mut d_values = Vec::with_capacity(ep.steps.len());

        for (step, sc) in ep.steps.iter().zip(ep_consts) {
            let cache = forward_step(
                params,
                &state.h,
                &state.c,
                &step.observation,
                &step.afterstates,
            )?;
            state = RecurrentState {
                h: cache.h.clone(),
                c: cache.c.clone(),
            };

            let new_lp = cache.log_probs[step.chosen];
            let rho = (new_lp - sc.old_log_prob).exp();
            let unclipped = rho * sc.advantage;
            let clipped = rho.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * sc.advantage;
            let surrogate = unclipped.min(clipped);
            let entropy: f64 = cache
                .probs
                .iter()
                .zip(&cache.log_probs)
                .map(|(&p, &lp)| -p * lp)
                .sum();
            let verr = cache.value - sc.target;

            loss += scale * (-surrogate + cfg.value_coef * verr * verr - cfg.entropy_coef * entropy);
            stats.policy_loss += scale * -surrogate;
            stats.value_loss += scale * verr * verr;
            stats.entropy += scale * entropy;
            if (rho - 1.0).abs() > cfg.clip {
                stats.clip_count += 1;
            }
            stats.kl_sum += sc.old_log_prob - new_lp;

            // d loss / d logit_a, chain through logpi and entropy.
            let surr_grad = if unclipped <= clipped { rho * sc.advantage } else { 0.0 };
            let mut dl: Vec<f64> = Vec::with_capacity(cache.probs.len());
            for (a, (&p, &lp)) in cache.probs.iter().zip(&cache.log_probs).enumerate() {
                let indicator = if a == step.chosen { 1.0 } else { 0.0 };
                let d_surr = -surr_grad * (indicator - p);
                let d_ent = cfg.entropy_coef * p * (lp + entropy);
                dl.push(scale * (d_surr + d_ent));
            }
            d_logits.push(dl);
            d_values.push(scale * 2.0 * cfg.value_coef * verr);
            caches.push(cache);
        }

        backward_episode(params, &caches, &d_logits, &d_values, &mut grads);
    }

    Ok((loss, grads, stats))
}

fn global_norm(grads: &[f64]) -> f64 {
    grads.iter().map(|g| g * g).sum::<f64>().sqrt()
}

fn build_consts(
    batch: &RolloutBatch,
    cfg: &PPOConfig,
) -> Vec<Vec<StepConsts>> {
    let (advantages, targets) = compute_gae(batch, cfg.gamma, cfg.lambda);
    let all: Vec<f64> = advantages.iter().flatten().copied().collect();
    let n = all.len().max(1) as f64;
    let mean = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;

    batch
        .episodes
        .iter()
        .zip(advantages.iter().zip(&targets))
        .map(|(ep, (adv, tgt))| {
            ep.steps
                .iter()
                .zip(adv.iter().zip(tgt))
                .map(|(step, (&a, &t))| StepConsts {
                    old_log_prob: step.log_prob,
                    advantage: (a - mean) / std,
                    target: t,
                })
                .collect()
        })
        .collect()
}

/// One PPO update over a batch: several epochs of shuffled
/// episode-minibatches, gradient-norm clipping, Adam. A non-finite loss
/// or parameter aborts the whole update, restoring the entry parameters.
pub fn ppo_update(
    params: &mut PolicyParams,
    opt: &mut Adam,
    batch: &RolloutBatch,
    cfg: &PPOConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Diagnostics, AgentError> {
    cfg.validate()?;
    if batch.episodes.is_empty() {
        return Err(AgentError::InvalidConfig("empty rollout batch".into()));
    }
    let consts = build_consts(batch, cfg);
    let snapshot = params.to_flat();
    let opt_snapshot = opt.clone();

    let mut totals = Diagnostics::default();
    let mut minibatches = 0usize;

    let mut order: Vec<usize> = (0..batch.episodes.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch_episodes) {
            let eps: Vec<&EpisodeRecord> = chunk.iter().map(|&i| &batch.episodes[i]).collect();
            let cs: Vec<&[StepConsts]> = chunk.iter().map(|&i| consts[i].as_slice()).collect();
            let (loss, grads, stats) = minibatch_loss(params, &eps, &cs, cfg)?;
            if !loss.is_finite() {
                *params = PolicyParams::from_flat(params.shapes, &snapshot)?;
                *opt = opt_snapshot;
                return Err(AgentError::NonFinite(format!(
                    "loss {loss} at update {}",
                    opt.t
                )));
            }

            let mut flat_grads = grads.to_flat();
            let norm = global_norm(&flat_grads);
            if norm > cfg.max_grad_norm {
                let s = cfg.max_grad_norm / norm;
                for g in &mut flat_grads {
                    *g *= s;
                }
            }
            let mut flat = params.to_flat();
            opt.step(&mut flat, &flat_grads, cfg.lr);
            *params = PolicyParams::from_flat(params.shapes, &flat)?;

            totals.policy_loss += stats.policy_loss;
            totals.value_loss += stats.value_loss;
            totals.entropy += stats.entropy;
            totals.clip_fraction += stats.clip_count as f64 / stats.steps.max(1) as f64;
            totals.approx_kl += stats.kl_sum / stats.steps.max(1) as f64;
            totals.grad_norm += norm;
            minibatches += 1;
        }
    }

    if !params.is_finite() {
        *params = PolicyParams::from_flat(params.shapes, &snapshot)?;
        *opt = opt_snapshot;
        return Err(AgentError::NonFinite("parameters left finite range".into()));
    }
    let k = minibatches.max(1) as f64;
    Ok(Diagnostics {
        policy_loss: totals.policy_loss / k,
        value_loss: totals.value_loss / k,
        entropy: totals.entropy / k,
        clip_fraction: totals.clip_fraction / k,
        approx_kl: totals.approx_kl / k,
        grad_norm: totals.grad_norm / k,
    })
}

/// One convergence-log row per collected trajectory. `best_len` is the
/// running minimum over goal-reaching episode lengths, empty until the
/// first success.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub trajectory: u64,
    pub outcome: Outcome,
    pub ret: f64,
    pub path_len: u32,
    pub best_len: Option<u32>,
}

pub const LOG_HEADER: &str = "trajectory,outcome,return,path_len,best_len";

impl fmt::Display for LogRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{}",
            self.trajectory,
            self.outcome.as_str(),
            self.ret,
            self.path_len,
            self.best_len.map(|b| b.to_string()).unwrap_or_default()
        )
    }
}

/// When to stop before the trajectory budget runs out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopCondition {
    /// Run the full budget.
    Budget,
    /// Stop once some sampled trajectory has reached the goal in at most
    /// this many steps.
    BestFound(u32),
    /// Stop once the deterministic greedy rollout reaches the goal in at
    /// most this many steps (checked after each update).
    GreedyOptimal(u32),
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub params: PolicyParams,
    pub log: Vec<LogRow>,
    pub trajectories: u64,
    pub diagnostics: Vec<Diagnostics>,
}

/// Collect/update loop. Iterations collect `episodes_per_batch` episodes
/// (clamped to the remaining budget), append one log row per trajectory,
/// and run one PPO update; the log's `best_len` column is non-increasing
/// by construction.
pub fn train(
    env_config: &EnvConfig,
    cfg: &PPOConfig,
    stop: StopCondition,
    n_bits: usize,
) -> Result<TrainResult, AgentError> {
    cfg.validate()?;
    let shapes = Shapes::for_bits(n_bits);
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = PolicyParams::init(shapes, master.gen());
    let mut opt = Adam::new(shapes.flat_len());
    let mut log: Vec<LogRow> = Vec::new();
    let mut diagnostics = Vec::new();
    let mut best: Option<u32> = None;
    let mut collected: u64 = 0;

    while collected < cfg.trajectory_budget {
        let room = cfg.trajectory_budget - collected;
        let n = (cfg.episodes_per_batch as u64).min(room) as usize;
        let batch = collect_rollouts(&params, env_config, n, master.gen())?;

        for ep in &batch.episodes {
            collected += 1;
            if ep.outcome == Outcome::Goal {
                best = Some(best.map_or(ep.len, |b| b.min(ep.len)));
            }
            log.push(LogRow {
                trajectory: collected,
                outcome: ep.outcome,
                ret: ep.ret,
                path_len: ep.len,
                best_len: best,
            });
        }

        if let StopCondition::BestFound(target) = stop {
            if best.is_some_and(|b| b <= target) {
                break;
            }
        }

        diagnostics.push(ppo_update(&mut params, &mut opt, &batch, cfg, &mut master)?);

        if let StopCondition::GreedyOptimal(target) = stop {
            let report = greedy_rollout(&params, env_config)?;
            if report.outcome == Outcome::Goal && report.steps <= target {
                break;
            }
        }
    }

    Ok(TrainResult {
        params,
        log,
        trajectories: collected,
        diagnostics,
    })
}
