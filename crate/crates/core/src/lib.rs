//! Toolkit for studying acid-catalyzed carbohydrate chemistry as a
//! reinforcement-learning problem.
//!
//! The crate is organized bottom-up:
//!
//! * [`molgraph`] -- molecular graphs over C/O with implicit hydrogens,
//!   a SMILES-subset parser/writer, exact canonicalization, and Morgan
//!   fingerprints.
//! * [`rules`] -- graph-rewrite reaction templates, subgraph matching with
//!   reaction-center enumeration, and the default acid-chemistry catalog.
//! * [`network`] -- fixpoint expansion of a rule catalog into a reaction
//!   network, reversal, and a text file format.
//! * [`env`] -- the episodic MDP over network states with fingerprint
//!   observations and afterstate action encoding.
//! * [`oracle`] -- exact BFS/DFS search over the environment's state graph,
//!   used to validate learned policies.
//! * [`agent`] -- a hand-rolled recurrent policy (LSTM) trained with PPO,
//!   plus a tabular Q-learning baseline.

pub mod agent;
pub mod bits;
pub mod env;
pub mod fnv;
pub mod molgraph;
pub mod network;
pub mod oracle;
pub mod rules;

#[cfg(test)]
pub(crate) mod testutil;
