//! Episode collection with the stochastic policy, generalized advantage
//! estimation, and the deterministic greedy rollout used for evaluation.

use crate::bits::BitVec;
use crate::env::{Env, EnvConfig, Observation, Outcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::nn::{policy_step, PolicyParams, RecurrentState};
use super::AgentError;

/// One decision point: everything needed to recompute the policy output
/// under new parameters during updates.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub observation: Observation,
    pub afterstates: Vec<BitVec>,
    pub chosen: usize,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
    /// Recurrent state at the start of the step; zeros at episode start.
    pub state_before: RecurrentState,
}

#[derive(Clone, Debug)]
pub struct EpisodeRecord {
    pub steps: Vec<StepRecord>,
    pub outcome: Outcome,
    /// Sum of rewards; with the sparse scheme this is the single terminal
    /// reward.
    pub ret: f64,
    pub len: u32,
}

#[derive(Clone, Debug)]
pub struct RolloutBatch {
    pub episodes: Vec<EpisodeRecord>,
}

impl RolloutBatch {
    pub fn total_steps(&self) -> usize {
        self.episodes.iter().map(|e| e.steps.len()).sum()
    }
}

/// Sample `n_episodes` with the stochastic policy. Reproducible: every
/// episode gets its own generator seeded from one stream, so a given
/// (params, config, seed) triple always yields the same batch.
pub fn collect_rollouts(
    params: &PolicyParams,
    config: &EnvConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<RolloutBatch, AgentError> {
    if n_episodes == 0 {
        return Err(AgentError::InvalidConfig("zero episodes requested".into()));
    }
    let proto = Env::new(config.clone())?;
    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    let mut episodes = Vec::with_capacity(n_episodes);
    for _ in 0..n_episodes {
        let ep_seed = seeder.gen::<u64>();
        episodes.push(run_episode(params, &proto, ep_seed)?);
    }
    Ok(RolloutBatch { episodes })
}

fn run_episode(
    params: &PolicyParams,
    proto: &Env,
    seed: u64,
) -> Result<EpisodeRecord, AgentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = proto.clone();
    let reset = env.reset(seed);
    let mut state = RecurrentState::zeros(params.shapes.h);
    let mut steps = Vec::new();
    let mut ret = reset.reward;

    while !env.state().done() {
        let observation = env.observation();
        let n = env.legal_actions().len();
        let mut afterstates = Vec::with_capacity(n);
        for i in 0..n {
            afterstates.push(env.afterstate_bits(i)?);
        }
        let out = policy_step(params, &state, &observation, &afterstates)?;

        let draw: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = n - 1;
        for (i, &p) in out.probs.iter().enumerate() {
            acc += p;
            if draw < acc {
                chosen = i;
                break;
            }
        }

        let report = env.step(chosen)?;
        ret += report.reward;
        steps.push(StepRecord {
            observation,
            afterstates,
            chosen,
            log_prob: out.log_probs[chosen],
            value: out.value,
            reward: report.reward,
            done: report.done,
            state_before: state,
        });
        state = out.state;
    }

    Ok(EpisodeRecord {
        steps,
        outcome: env.state().outcome,
        ret,
        len: env.state().t,
    })
}

/// Generalized advantage estimation, per episode:
/// delta_t = r_t + gamma*V(s_{t+1})*(1-done) - V(s_t), advantages are the
/// (gamma*lambda)-discounted partial sums of the deltas, and the value
/// targets are advantage + V. Returned in batch order.
pub fn compute_gae(
    batch: &RolloutBatch,
    gamma: f64,
    lambda: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut advantages = Vec::with_capacity(batch.episodes.len());
    let mut targets = Vec::with_capacity(batch.episodes.len());
    for ep in &batch.episodes {
        let n = ep.steps.len();
        let mut adv = vec![0.0; n];
        let mut acc = 0.0;
        for t in (0..n).rev() {
            let step = &ep.steps[t];
            // A truncated tail (no terminal step recorded) bootstraps zero,
            // same as a terminal one.
            let (next_value, carry) = if step.done || t + 1 == n {
                (0.0, 0.0)
            } else {
                (ep.steps[t + 1].value, acc)
            };
            let delta = step.reward + gamma * next_value - step.value;
            acc = delta + gamma * lambda * carry;
            adv[t] = acc;
        }
        let tgt: Vec<f64> = adv
            .iter()
            .zip(&ep.steps)
            .map(|(a, s)| a + s.value)
            .collect();
        advantages.push(adv);
        targets.push(tgt);
    }
    (advantages, targets)
}

#[derive(Clone, Debug)]
pub struct GreedyReport {
    /// Episode trace lines, one per step.
    pub trace: Vec<String>,
    pub outcome: Outcome,
    pub steps: u32,
    pub ret: f64,
}

/// Deterministic evaluation: argmax action each step, ties to the lowest
/// index.
pub fn greedy_rollout(
    params: &PolicyParams,
    config: &EnvConfig,
) -> Result<GreedyReport, AgentError> {
    let mut env = Env::new(config.clone())?;
    let reset = env.reset(0);
    let mut state = RecurrentState::zeros(params.shapes.h);
    let mut ret = reset.reward;

    while !env.state().done() {
        let observation = env.observation();
        let n = env.legal_actions().len();
        let mut afterstates = Vec::with_capacity(n);
        for i in 0..n {
            afterstates.push(env.afterstate_bits(i)?);
        }
        let out = policy_step(params, &state, &observation, &afterstates)?;
        let mut chosen = 0;
        for (i, &p) in out.probs.iter().enumerate() {
            if p > out.probs[chosen] {
                chosen = i;
            }
        }
        ret += env.step(chosen)?.reward;
        state = out.state;
    }

    Ok(GreedyReport {
        trace: env.trace().to_vec(),
        outcome: env.state().outcome,
        steps: env.state().t,
        ret,
    })
}
