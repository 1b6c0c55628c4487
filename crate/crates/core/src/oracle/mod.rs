//! Ground-truth search over the environment's state graph.
//!
//! States are tracked species multisets, exactly as the environment sees
//! them, so path lengths here equal episode step counts there. The graph
//! is the breadth-first closure of the start state up to a depth cap;
//! goal states are absorbing (episodes end on arrival, so nothing leaves
//! them). Every recorded edge is re-validated by replaying it through the
//! episode machinery during construction.
//!
//! Frontier honesty: when the depth cap (not a fixpoint) stops discovery,
//! the last layer of states is recorded but not expanded, and the graph is
//! marked `truncated`. Unexpanded states are excluded from the dead-end
//! census and degree statistics, and exhaustive enumeration refuses to run
//! at all, since its walk counts would silently depend on the cutoff.

use crate::env::{Env, EnvConfig, EnvError, StateKey};
use crate::network::ReactionNetwork;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::Arc;
use thiserror::Error;

/// Exhaustive enumeration is for small instances; graphs above this size
/// must be studied through `shortest_path` and `stats` instead.
pub const EXHAUSTIVE_NODE_CAP: usize = 10_000;

#[derive(Error, Debug)]
pub enum OracleError {
    #[error("state graph exceeds {limit} states")]
    TooManyStates { limit: usize },
    #[error("graph was truncated by its depth cap; exhaustive results would depend on the cutoff")]
    Truncated,
    #[error("walk enumeration exceeds {limit} paths or visits")]
    TooManyPaths { limit: usize },
    #[error("search disagreement: breadth-first says {bfs:?}, exhaustive minimum is {dfs:?}")]
    Disagreement {
        bfs: Option<usize>,
        dfs: Option<usize>,
    },
    #[error("path replay diverged: {0}")]
    Replay(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// One transition out of a state. `action_index` is the position in the
/// environment's legal-action list at the source state, so a path replays
/// by stepping its indices in order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub to: usize,
    pub action_index: usize,
    pub template_id: String,
    pub site_key: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathEdge {
    pub from: usize,
    pub to: usize,
    pub action_index: usize,
    pub template_id: String,
    pub site_key: String,
}

/// A shortest-path answer. When `exists` is false the other fields are
/// zero/empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathResult {
    pub exists: bool,
    pub length: usize,
    pub actions: Vec<PathEdge>,
}

/// Everything a depth-limited exhaustive enumeration finds: every walk
/// from the start that terminates at a goal state within the horizon
/// (walks stop at goal states and at dead ends, like episodes), plus the
/// dead-end census and out-degree extremes over the explored region.
#[derive(Clone, Debug)]
pub struct Exhaustive {
    pub goal_paths: Vec<Vec<PathEdge>>,
    pub dead_ends: Vec<usize>,
    pub max_out_degree: usize,
}

/// Out-degree statistics over the explored region (expanded states plus
/// goal states, which are terminal and count as degree zero). States left
/// unexpanded by a depth cutoff are counted in `states` but nowhere else.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphStats {
    pub states: usize,
    pub edges: usize,
    pub dead_ends: usize,
    pub max_out_degree: usize,
    pub degree_histogram: BTreeMap<usize, usize>,
}

/// Species/reaction counts straight off the network, state-graph numbers
/// from the search oracle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkStats {
    pub species_count: usize,
    pub reaction_count: usize,
    pub graph: GraphStats,
}

pub struct StateGraph {
    env: Env,
    pub nodes: Vec<StateKey>,
    /// Adjacency in legal-action order; `edges[i]` is empty for goal,
    /// dead-end, and unexpanded states alike (see `expanded`).
    pub edges: Vec<Vec<Edge>>,
    /// Whether a state's outgoing actions were enumerated. Goal states are
    /// never expanded (episodes end there); unexpanded non-goal states
    /// exist only in truncated graphs.
    pub expanded: Vec<bool>,
    pub depth: Vec<u32>,
    pub start: usize,
    pub goal_nodes: BTreeSet<usize>,
    pub truncated: bool,
    node_index: HashMap<StateKey, usize>,
}

/// Breadth-first closure of the configured start state. `depth_cap`
/// bounds how many steps out discovery walks (use at least the episode
/// horizon unless deliberately probing a neighborhood); `max_states` is a
/// hard overflow guard.
pub fn build_state_graph(
    config: &EnvConfig,
    depth_cap: u32,
    max_states: usize,
) -> Result<StateGraph, OracleError> {
    let mut env = Env::new(config.clone())?;
    env.reset(0);
    let goal = config.goal.clone();

    let mut nodes: Vec<StateKey> = Vec::new();
    let mut node_index: HashMap<StateKey, usize> = HashMap::new();
    let mut edges: Vec<Vec<Edge>> = Vec::new();
    let mut expanded: Vec<bool> = Vec::new();
    let mut depth: Vec<u32> = Vec::new();
    let mut goal_nodes: BTreeSet<usize> = BTreeSet::new();

    let root = env.state().species.clone();
    nodes.push(root.clone());
    node_index.insert(root.clone(), 0);
    edges.push(Vec::new());
    expanded.push(false);
    depth.push(0);
    if root.contains_key(&goal) {
        goal_nodes.insert(0);
    }

    let mut queue: VecDeque<usize> = VecDeque::new();
    if !goal_nodes.contains(&0) {
        queue.push_back(0);
    }

    while let Some(cur) = queue.pop_front() {
        if depth[cur] >= depth_cap {
            continue;
        }
        let actions = env.actions_from(&nodes[cur]);
        expanded[cur] = true;
        let mut out = Vec::with_capacity(actions.len());
        for a in &actions {
            let key = a.successor().clone();
            let to = match node_index.get(&key) {
                Some(&id) => id,
                None => {
                    if nodes.len() >= max_states {
                        return Err(OracleError::TooManyStates { limit: max_states });
                    }
                    let id = nodes.len();
                    nodes.push(key.clone());
                    node_index.insert(key.clone(), id);
                    edges.push(Vec::new());
                    expanded.push(false);
                    depth.push(depth[cur] + 1);
                    if nodes[id].contains_key(&goal) {
                        goal_nodes.insert(id);
                    } else {
                        queue.push_back(id);
                    }
                    id
                }
            };
            out.push(Edge {
                to,
                action_index: a.index,
                template_id: a.template_id.clone(),
                site_key: a.site_key.clone(),
            });
        }
        edges[cur] = out;
    }

    let truncated = (0..nodes.len()).any(|i| !expanded[i] && !goal_nodes.contains(&i));
    let graph = StateGraph {
        env,
        nodes,
        edges,
        expanded,
        depth,
        start: 0,
        goal_nodes,
        truncated,
        node_index,
    };
    graph.validate_edges()?;
    Ok(graph)
}

/// Combined report for a network with start/goal metadata.
pub fn network_stats(
    net: &Arc<ReactionNetwork>,
    depth_cap: u32,
    max_states: usize,
) -> Result<NetworkStats, OracleError> {
    let config = EnvConfig::from_network(net.clone())?;
    let graph = build_state_graph(&config, depth_cap, max_states)?;
    Ok(NetworkStats {
        species_count: net.species.len(),
        reaction_count: net.reactions.len(),
        graph: graph.stats(),
    })
}

impl StateGraph {
    pub fn node_id(&self, key: &StateKey) -> Option<usize> {
        self.node_index.get(key).copied()
    }

    fn explored(&self, i: usize) -> bool {
        self.expanded[i] || self.goal_nodes.contains(&i)
    }

    /// Replay every recorded edge through a real episode and check that it
    /// lands on the recorded successor. Large graphs are stride-sampled
    /// (at least fifty thousand edges checked).
    fn validate_edges(&self) -> Result<(), OracleError> {
        let total: usize = self.edges.iter().map(Vec::len).sum();
        let stride = (total / 50_000).max(1);
        let mut env = self.env.clone();
        let mut n = 0usize;
        for (from, out) in self.edges.iter().enumerate() {
            for e in out {
                n += 1;
                if n % stride != 0 {
                    continue;
                }
                env.reset_from(self.nodes[from].clone());
                if env.state().done() {
                    return Err(OracleError::Replay(format!(
                        "state {from} has edges but its episode ends at reset"
                    )));
                }
                env.step(e.action_index).map_err(OracleError::Env)?;
                if env.state().species != self.nodes[e.to] {
                    return Err(OracleError::Replay(format!(
                        "edge {from}->{} via {}@{} lands elsewhere",
                        e.to, e.template_id, e.site_key
                    )));
                }
            }
        }
        Ok(())
    }

    /// Breadth-first shortest path from the start to any goal state, ties
    /// broken toward the lexicographically smallest action-index sequence
    /// (backward distance labels, then a greedy forward walk). The result
    /// is replay-validated before being returned.
    pub fn shortest_path(&self) -> Result<PathResult, OracleError> {
        let n = self.nodes.len();
        let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (from, out) in self.edges.iter().enumerate() {
            for e in out {
                reverse[e.to].push(from);
            }
        }

        let mut dist: Vec<Option<u32>> = vec![None; n];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for &g in &self.goal_nodes {
            dist[g] = Some(0);
            queue.push_back(g);
        }
        while let Some(cur) = queue.pop_front() {
            let d = dist[cur].unwrap();
            for &p in &reverse[cur] {
                if dist[p].is_none() {
                    dist[p] = Some(d + 1);
                    queue.push_back(p);
                }
            }
        }

        let Some(total) = dist[self.start] else {
            return Ok(PathResult {
                exists: false,
                length: 0,
                actions: Vec::new(),
            });
        };

        let mut actions = Vec::with_capacity(total as usize);
        let mut cur = self.start;
        for remaining in (1..=total).rev() {
            let e = self.edges[cur]
                .iter()
                .find(|e| dist[e.to] == Some(remaining - 1))
                .expect("distance labels admit a next hop");
            actions.push(PathEdge {
                from: cur,
                to: e.to,
                action_index: e.action_index,
                template_id: e.template_id.clone(),
                site_key: e.site_key.clone(),
            });
            cur = e.to;
        }
        let path = PathResult {
            exists: true,
            length: total as usize,
            actions,
        };
        self.replay(&path)?;
        Ok(path)
    }

    /// Step a path's action indices through a fresh episode, checking each
    /// hop against the recorded states; returns the episode trace lines.
    /// The final step must reach the goal at exactly the path's length.
    pub fn replay(&self, path: &PathResult) -> Result<Vec<String>, OracleError> {
        if !path.exists {
            return Err(OracleError::Replay("no path to replay".into()));
        }
        let mut env = self.env.clone();
        let reset = env.reset(0);
        if env.state().species != self.nodes[self.start] {
            return Err(OracleError::Replay("reset state differs from graph start".into()));
        }
        // A zero-length path is legitimate when the start already holds the
        // goal; any other done-at-reset episode cannot replay anything.
        if reset.done && !path.actions.is_empty() {
            return Err(OracleError::Replay("episode ends at reset".into()));
        }
        for e in &path.actions {
            env.step(e.action_index).map_err(OracleError::Env)?;
            if env.state().species != self.nodes[e.to] {
                return Err(OracleError::Replay(format!(
                    "hop to state {} landed elsewhere",
                    e.to
                )));
            }
        }
        let state = env.state();
        if state.outcome != crate::env::Outcome::Goal || state.t as usize != path.length {
            return Err(OracleError::Replay(format!(
                "replay ended {} at t={}, wanted goal at t={}",
                state.outcome.as_str(),
                state.t,
                path.length
            )));
        }
        Ok(env.trace().to_vec())
    }

    /// Enumerate every goal-terminated walk of length at most `m` (walks
    /// stop at goal states, mirroring episodes, so loops threaded before
    /// the goal are distinct walks). `max_paths` bounds both recorded
    /// paths and visited walk-tree nodes. Cross-checks the breadth-first
    /// answer: disagreement is an error, not a result.
    pub fn exhaustive_check(&self, m: u32, max_paths: usize) -> Result<Exhaustive, OracleError> {
        if self.nodes.len() > EXHAUSTIVE_NODE_CAP {
            return Err(OracleError::TooManyStates {
                limit: EXHAUSTIVE_NODE_CAP,
            });
        }
        if self.truncated {
            return Err(OracleError::Truncated);
        }

        struct Dfs<'a> {
            graph: &'a StateGraph,
            m: u32,
            max_paths: usize,
            visits: usize,
            stack: Vec<PathEdge>,
            paths: Vec<Vec<PathEdge>>,
        }
        impl Dfs<'_> {
            fn go(&mut self, node: usize, depth: u32) -> Result<(), OracleError> {
                self.visits += 1;
                if self.visits > self.max_paths {
                    return Err(OracleError::TooManyPaths {
                        limit: self.max_paths,
                    });
                }
                if self.graph.goal_nodes.contains(&node) {
                    if self.paths.len() >= self.max_paths {
                        return Err(OracleError::TooManyPaths {
                            limit: self.max_paths,
                        });
                    }
                    self.paths.push(self.stack.clone());
                    return Ok(());
                }
                if depth == self.m {
                    return Ok(());
                }
                for e in &self.graph.edges[node] {
                    self.stack.push(PathEdge {
                        from: node,
                        to: e.to,
                        action_index: e.action_index,
                        template_id: e.template_id.clone(),
                        site_key: e.site_key.clone(),
                    });
                    self.go(e.to, depth + 1)?;
                    self.stack.pop();
                }
                Ok(())
            }
        }

        let mut dfs = Dfs {
            graph: self,
            m,
            max_paths,
            visits: 0,
            stack: Vec::new(),
            paths: Vec::new(),
        };
        dfs.go(self.start, 0)?;

        let bfs = self.shortest_path()?;
        let dfs_min = dfs.paths.iter().map(Vec::len).min();
        let agreed = match (bfs.exists, dfs_min) {
            (true, Some(d)) => d == bfs.length,
            // No walk within m is only consistent with a longer true
            // shortest path.
            (true, None) => bfs.length > m as usize,
            (false, None) => true,
            (false, Some(_)) => false,
        };
        if !agreed {
            return Err(OracleError::Disagreement {
                bfs: bfs.exists.then_some(bfs.length),
                dfs: dfs_min,
            });
        }

        let stats = self.stats();
        Ok(Exhaustive {
            goal_paths: dfs.paths,
            dead_ends: (0..self.nodes.len())
                .filter(|&i| {
                    self.explored(i) && !self.goal_nodes.contains(&i) && self.edges[i].is_empty()
                })
                .collect(),
            max_out_degree: stats.max_out_degree,
        })
    }

    pub fn stats(&self) -> GraphStats {
        let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
        let mut dead_ends = 0;
        let mut max_out = 0;
        for i in 0..self.nodes.len() {
            if !self.explored(i) {
                continue;
            }
            let d = self.edges[i].len();
            *histogram.entry(d).or_insert(0) += 1;
            max_out = max_out.max(d);
            if d == 0 && !self.goal_nodes.contains(&i) {
                dead_ends += 1;
            }
        }
        GraphStats {
            states: self.nodes.len(),
            edges: self.edges.iter().map(Vec::len).sum(),
            dead_ends,
            max_out_degree: max_out,
            degree_histogram: histogram,
        }
    }
}
