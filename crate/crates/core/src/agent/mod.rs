//! Recurrent policy over variable-size action sets, trained with PPO.
//!
//! The policy never sees a global action vocabulary; there is none, since
//! legal actions vary per state and are unbounded across the network.
//! Instead each step embeds the current observation, advances an LSTM,
//! and scores every legal action by feeding the recurrent output together
//! with that action's afterstate fingerprint through a small scoring
//! head; a softmax over the legal set gives the distribution. The value
//! head reads the same recurrent output.
//!
//! All arithmetic is f64 and hand-rolled (forward, backpropagation
//! through time, Adam), which keeps runs bit-reproducible from a seed and
//! lets a finite-difference test pin the gradients. The exact gate
//! equations are in `docs/policy.md`.
//!
//! Submodules: [`nn`] network and gradients, [`rollout`] episode
//! collection and GAE, [`ppo`] the update rule and training loop,
//! [`qtable`] a tabular Q-learning baseline, [`checkpoint`] a versioned
//! binary parameter format.

use crate::env::EnvError;
use thiserror::Error;

pub mod checkpoint;
pub mod nn;
pub mod ppo;
pub mod qtable;
pub mod rollout;

pub use checkpoint::{load_params, save_params};
pub use nn::{policy_step, PolicyParams, RecurrentState, Shapes, StepOutput};
pub use ppo::{train, ppo_update, Adam, Diagnostics, LogRow, PPOConfig, StopCondition, TrainResult};
pub use qtable::{tabular_baseline, QTableConfig, QTableResult};
pub use rollout::{
    collect_rollouts, compute_gae, greedy_rollout, EpisodeRecord, GreedyReport, RolloutBatch,
    StepRecord,
};

#[derive(Error, Debug)]
pub enum AgentError {
    #[error("policy asked to score an empty action set")]
    EmptyActionSet,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("update aborted on non-finite loss ({0})")]
    NonFinite(String),
    #[error("tabular learner exceeded {limit} distinct states")]
    StateOverflow { limit: usize },
    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests;
