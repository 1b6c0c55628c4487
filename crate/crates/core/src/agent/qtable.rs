//! Tabular Q-learning over canonical state keys, as a sanity baseline
//! for the recurrent policy. Emits the same convergence-log rows as
//! [`super::ppo::train`] so runs can be compared side by side.

use crate::env::{Env, EnvConfig, Outcome, StateKey};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

use super::ppo::LogRow;
use super::AgentError;

#[derive(Clone, Copy, Debug)]
pub struct QTableConfig {
    pub alpha: f64,
    pub gamma: f64,
    /// Exploration rate, annealed linearly from start to end over the run.
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub episodes: u64,
    pub seed: u64,
    /// Hard cap on distinct states the table may hold.
    pub max_states: usize,
}

impl Default for QTableConfig {
    fn default() -> QTableConfig {
        QTableConfig {
            alpha: 0.5,
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            episodes: 2_000,
            seed: 0,
            max_states: 100_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct QTableResult {
    pub log: Vec<LogRow>,
    /// Q(s, a) indexed by state key and legal-action position.
    pub q: HashMap<StateKey, Vec<f64>>,
    pub best_len: Option<u32>,
}

/// Epsilon-greedy Q-learning: Q[s][a] += alpha (r + gamma max_a' Q[s'][a']
/// - Q[s][a]), with terminal successors bootstrapping zero.
pub fn tabular_baseline(
    env_config: &EnvConfig,
    cfg: &QTableConfig,
) -> Result<QTableResult, AgentError> {
    if cfg.episodes == 0 || !(0.0..=1.0).contains(&cfg.epsilon_start) {
        return Err(AgentError::InvalidConfig(
            "episodes must be positive and epsilon in [0,1]".into(),
        ));
    }
    let proto = Env::new(env_config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut q: HashMap<StateKey, Vec<f64>> = HashMap::new();
    let mut log = Vec::with_capacity(cfg.episodes as usize);
    let mut best: Option<u32> = None;

    for episode in 0..cfg.episodes {
        let frac = if cfg.episodes > 1 {
            episode as f64 / (cfg.episodes - 1) as f64
        } else {
            0.0
        };
        let epsilon = cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac;

        let mut env = proto.clone();
        let reset = env.reset(episode);
        let mut ret = reset.reward;

        while !env.state().done() {
            let state = env.state().species.clone();
            let n = env.legal_actions().len();
            if !q.contains_key(&state) {
                if q.len() >= cfg.max_states {
                    return Err(AgentError::StateOverflow {
                        limit: cfg.max_states,
                    });
                }
                q.insert(state.clone(), vec![0.0; n]);
            }

            let chosen = if rng.gen::<f64>() < epsilon {
                rng.gen_range(0..n)
            } else {
                argmax(&q[&state])
            };
            let report = env.step(chosen)?;
            ret += report.reward;

            let bootstrap = if report.done {
                0.0
            } else {
                let succ = &env.state().species;
                q.get(succ).map_or(0.0, |row| row[argmax(row)])
            };
            let row = q.get_mut(&state).expect("state was just inserted");
            row[chosen] += cfg.alpha * (report.reward + cfg.gamma * bootstrap - row[chosen]);
        }

        let outcome = env.state().outcome;
        if outcome == Outcome::Goal {
            best = Some(best.map_or(env.state().t, |b| b.min(env.state().t)));
        }
        log.push(LogRow {
            trajectory: episode + 1,
            outcome,
            ret,
            path_len: env.state().t,
            best_len: best,
        });
    }

    Ok(QTableResult { log, q, best_len: best })
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
