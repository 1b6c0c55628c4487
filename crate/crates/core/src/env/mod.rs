//! Episodic MDP over reaction chemistry.
//!
//! A state is a multiset of species (canonical forms); an action is one
//! instantiated reaction applicable to that multiset; transitions are
//! deterministic. An episode ends when the goal species appears (reward
//! `1 + 1/T` after `T` steps), when no reaction applies (dead end, reward
//! −1), or when the step horizon runs out (timeout, reward −1). Every
//! other step pays zero, so each episode carries exactly one nonzero
//! reward.
//!
//! Two interchangeable backends drive the transition function: `Dataset`
//! walks a pregenerated [`ReactionNetwork`]; `Live` runs the rule engine
//! against the current state on the fly, bounded by the same species
//! filter the network generator uses. On the same forward chemistry the
//! two produce identical trajectories (the dataset backend is memoization,
//! nothing more). The live backend does not support reversed networks:
//! reversed reaction records can have several principal reactants, which
//! single-molecule matching cannot enumerate.
//!
//! The proton/water bath is governed by one of two pool policies:
//!
//! * [`AuxPool::Inexhaustible`] — bath species are ambient. They are
//!   dropped from the tracked multiset, declared bath consumption is
//!   always satisfiable, and reactions all of whose reactants are ambient
//!   are excluded (they would be state-preserving null actions). The pool
//!   membership defaults to the chemistry's declared bath and can be
//!   overridden per config; the goal species is always tracked.
//! * [`AuxPool::Counted`] — nothing is ambient. Every copy of every
//!   species is tracked, and a reaction is legal only when its full input
//!   multiset (principals plus declared bath) is on hand.

use crate::bits::BitVec;
use crate::molgraph::{
    morgan_fingerprint, parse_smiles, CanonicalForm, FingerprintParams, MolGraph, ParseError,
};
use crate::network::{ReactionNetwork, SpeciesFilter};
use crate::rules::{enumerate_reactions, AuxAvailability, Catalog};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("goal {0} is not in the network")]
    GoalNotInNetwork(String),
    #[error("start species {0} is not in the network")]
    StartNotInNetwork(String),
    #[error("episode already ended ({0})")]
    EpisodeOver(&'static str),
    #[error("action index {index} out of range, {len} legal actions")]
    BadActionIndex { index: usize, len: usize },
    #[error("unparsable species form: {0}")]
    BadForm(#[from] ParseError),
}

/// Terminal rewards. Reaching the goal in `T` steps pays
/// `goal_base + 1/T`; a goal already present at reset is paid as `T = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardScheme {
    pub goal_base: f64,
    pub dead_end: f64,
    pub timeout: f64,
}

impl Default for RewardScheme {
    fn default() -> Self {
        RewardScheme {
            goal_base: 1.0,
            dead_end: -1.0,
            timeout: -1.0,
        }
    }
}

impl RewardScheme {
    pub fn goal_reward(&self, steps: u32) -> f64 {
        self.goal_base + 1.0 / f64::from(steps.max(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AuxPool {
    Inexhaustible,
    Counted,
}

#[derive(Clone)]
pub enum Backend {
    /// Pregenerated network; transitions are indexed lookups.
    Dataset(Arc<ReactionNetwork>),
    /// Rule engine on the fly. `filter` bounds admissible products exactly
    /// like network expansion: one failing component drops the whole
    /// reaction.
    Live {
        catalog: Arc<Catalog>,
        filter: SpeciesFilter,
    },
}

/// The species multiset tracked during an episode.
pub type StateKey = BTreeMap<CanonicalForm, u32>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Running,
    Goal,
    DeadEnd,
    Timeout,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Running => "running",
            Outcome::Goal => "goal",
            Outcome::DeadEnd => "dead-end",
            Outcome::Timeout => "timeout",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnvState {
    pub species: StateKey,
    pub t: u32,
    pub outcome: Outcome,
}

impl EnvState {
    pub fn done(&self) -> bool {
        self.outcome != Outcome::Running
    }
}

/// One entry of the legal-action list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionInstance {
    /// Position in the current legal-action list.
    pub index: usize,
    pub template_id: String,
    pub site_key: String,
    /// Canonical forms of the reaction's recorded principal reactants.
    pub reactants: Vec<CanonicalForm>,
    successor: StateKey,
}

impl ActionInstance {
    /// Tracked multiset after taking this action.
    pub fn successor(&self) -> &StateKey {
        &self.successor
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// OR-fold of the fingerprints of the non-auxiliary species present.
    pub bits: BitVec,
    /// t / max_steps.
    pub step_frac: f64,
}

impl Observation {
    /// Bits as 0/1 values followed by the step fraction: length n_bits + 1.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v: Vec<f64> = (0..self.bits.len())
            .map(|i| if self.bits.get(i) { 1.0 } else { 0.0 })
            .collect();
        v.push(self.step_frac);
        v
    }
}

#[derive(Clone)]
pub struct EnvConfig {
    pub backend: Backend,
    /// Starting multiset; repeats allowed.
    pub start: Vec<CanonicalForm>,
    pub goal: CanonicalForm,
    pub max_steps: u32,
    pub rewards: RewardScheme,
    pub aux_pool: AuxPool,
    /// Ambient species under `Inexhaustible`; `None` means the chemistry's
    /// declared bath (network aux flags, or catalog consume/produce
    /// forms). Ignored under `Counted`.
    pub pool_species: Option<BTreeSet<CanonicalForm>>,
    /// Exclude actions leading to a multiset already visited this episode.
    pub forbid_revisit: bool,
    pub fingerprint: FingerprintParams,
}

impl EnvConfig {
    /// Defaults: 20-step horizon, unit goal reward plus 1/T, −1 for dead
    /// ends and timeouts, inexhaustible bath, revisits allowed.
    pub fn new(backend: Backend, start: Vec<CanonicalForm>, goal: CanonicalForm) -> EnvConfig {
        EnvConfig {
            backend,
            start,
            goal,
            max_steps: 20,
            rewards: RewardScheme::default(),
            aux_pool: AuxPool::Inexhaustible,
            pool_species: None,
            forbid_revisit: false,
            fingerprint: FingerprintParams::default(),
        }
    }

    /// Dataset config taking start and goal from the network's own
    /// metadata. Errors when the network has no goal set.
    pub fn from_network(net: Arc<ReactionNetwork>) -> Result<EnvConfig, EnvError> {
        let Some(goal_id) = net.goal_id else {
            return Err(EnvError::InvalidConfig("network has no goal".into()));
        };
        let start = net
            .initial_ids
            .iter()
            .map(|&id| net.species[id].canonical.clone())
            .collect();
        let goal = net.species[goal_id].canonical.clone();
        Ok(EnvConfig::new(Backend::Dataset(net), start, goal))
    }
}

/// Per-reaction lookup data the dataset backend precomputes once: the
/// tracked species a reaction needs (with multiplicities) and the ids it
/// adds. `None` marks reactions that can never fire under the pool policy
/// (every reactant ambient).
struct DatasetIndex {
    form_to_id: HashMap<CanonicalForm, usize>,
    reactions: Vec<Option<(BTreeMap<usize, u32>, Vec<usize>)>>,
    /// Reaction indices listing each species id among their requirements.
    by_species: Vec<Vec<usize>>,
}

impl DatasetIndex {
    fn build(net: &ReactionNetwork, pool: &BTreeSet<CanonicalForm>, mode: AuxPool) -> DatasetIndex {
        let form_to_id: HashMap<CanonicalForm, usize> = net
            .species
            .iter()
            .enumerate()
            .map(|(i, s)| (s.canonical.clone(), i))
            .collect();
        let pooled: Vec<bool> = net
            .species
            .iter()
            .map(|s| pool.contains(&s.canonical))
            .collect();

        let mut reactions = Vec::with_capacity(net.reactions.len());
        let mut by_species: Vec<Vec<usize>> = vec![Vec::new(); net.species.len()];
        for (r_idx, r) in net.reactions.iter().enumerate() {
            let entry = match mode {
                AuxPool::Inexhaustible => {
                    let mut req: BTreeMap<usize, u32> = BTreeMap::new();
                    for &id in &r.reactant_ids {
                        if !pooled[id] {
                            *req.entry(id).or_insert(0) += 1;
                        }
                    }
                    if req.is_empty() {
                        None
                    } else {
                        let adds: Vec<usize> = r
                            .product_ids
                            .iter()
                            .copied()
                            .filter(|&id| !pooled[id])
                            .collect();
                        Some((req, adds))
                    }
                }
                AuxPool::Counted => {
                    let mut req: BTreeMap<usize, u32> = BTreeMap::new();
                    for &id in r.reactant_ids.iter().chain(&r.aux_consumed) {
                        *req.entry(id).or_insert(0) += 1;
                    }
                    let adds: Vec<usize> =
                        r.product_ids.iter().chain(&r.aux_produced).copied().collect();
                    Some((req, adds))
                }
            };
            if let Some((req, _)) = &entry {
                for &id in req.keys() {
                    by_species[id].push(r_idx);
                }
            }
            reactions.push(entry);
        }
        DatasetIndex {
            form_to_id,
            reactions,
            by_species,
        }
    }
}

pub struct ResetReport {
    pub observation: Observation,
    /// Nonzero only for degenerate starts: goal already present (paid as a
    /// length-1 success) or no reaction applicable (paid as a dead end).
    pub reward: f64,
    pub done: bool,
}

pub struct StepReport {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

#[derive(Clone)]
pub struct Env {
    config: EnvConfig,
    /// Resolved ambient set; empty under `Counted`, never contains the goal.
    pool: BTreeSet<CanonicalForm>,
    /// Bath species excluded from observations.
    aux_forms: BTreeSet<CanonicalForm>,
    index: Option<Arc<DatasetIndex>>,
    state: EnvState,
    legal: Vec<ActionInstance>,
    visited: BTreeSet<StateKey>,
    trace: Vec<String>,
}

impl Env {
    /// Validates the config and resets. Construction is the expensive part
    /// in dataset mode (it indexes every reaction); cloning an `Env`
    /// shares the index.
    pub fn new(config: EnvConfig) -> Result<Env, EnvError> {
        if config.max_steps == 0 {
            return Err(EnvError::InvalidConfig("max_steps must be at least 1".into()));
        }
        if config.start.is_empty() {
            return Err(EnvError::InvalidConfig("start multiset is empty".into()));
        }

        let aux_forms: BTreeSet<CanonicalForm> = match &config.backend {
            Backend::Dataset(net) => net
                .species
                .iter()
                .filter(|s| s.auxiliary)
                .map(|s| s.canonical.clone())
                .collect(),
            Backend::Live { catalog, .. } => catalog.bath_forms().into_iter().collect(),
        };
        let mut pool = match config.aux_pool {
            AuxPool::Counted => BTreeSet::new(),
            AuxPool::Inexhaustible => config
                .pool_species
                .clone()
                .unwrap_or_else(|| aux_forms.clone()),
        };
        pool.remove(&config.goal);

        match &config.backend {
            Backend::Dataset(net) => {
                if net.find_species(&config.goal).is_none() {
                    return Err(EnvError::GoalNotInNetwork(config.goal.as_str().into()));
                }
                for f in &config.start {
                    if net.find_species(f).is_none() {
                        return Err(EnvError::StartNotInNetwork(f.as_str().into()));
                    }
                }
            }
            Backend::Live { filter, .. } => {
                for f in &config.start {
                    let m = parse_smiles(f.as_str())?;
                    if !filter.admits(&m) {
                        return Err(EnvError::InvalidConfig(format!(
                            "start species {} fails the species filter",
                            f.as_str()
                        )));
                    }
                }
                parse_smiles(config.goal.as_str())?;
            }
        }

        let index = match &config.backend {
            Backend::Dataset(net) => {
                Some(Arc::new(DatasetIndex::build(net, &pool, config.aux_pool)))
            }
            Backend::Live { .. } => None,
        };

        let mut env = Env {
            config,
            pool,
            aux_forms,
            index,
            state: EnvState {
                species: StateKey::new(),
                t: 0,
                outcome: Outcome::Running,
            },
            legal: Vec::new(),
            visited: BTreeSet::new(),
            trace: Vec::new(),
        };
        if env.start_key().is_empty() {
            return Err(EnvError::InvalidConfig(
                "start multiset contains only ambient species".into(),
            ));
        }
        env.reset(0);
        Ok(env)
    }

    fn start_key(&self) -> StateKey {
        let mut key = StateKey::new();
        for f in &self.config.start {
            if self.pool.contains(f) {
                continue;
            }
            *key.entry(f.clone()).or_insert(0) += 1;
        }
        key
    }

    /// Start a fresh episode. The seed is accepted for interface stability
    /// but unused: transitions are deterministic.
    pub fn reset(&mut self, _seed: u64) -> ResetReport {
        self.begin(self.start_key())
    }

    /// Start an episode from an arbitrary tracked multiset; the species
    /// must all be known to the backend. Used by the search oracle to
    /// probe and re-validate transitions.
    pub(crate) fn reset_from(&mut self, species: StateKey) -> ResetReport {
        self.begin(species)
    }

    fn begin(&mut self, species: StateKey) -> ResetReport {
        self.state = EnvState {
            species,
            t: 0,
            outcome: Outcome::Running,
        };
        self.visited.clear();
        self.trace.clear();
        self.legal.clear();

        let mut reward = 0.0;
        if self.state.species.contains_key(&self.config.goal) {
            self.state.outcome = Outcome::Goal;
            reward = self.config.rewards.goal_reward(0);
        } else {
            if self.config.forbid_revisit {
                self.visited.insert(self.state.species.clone());
            }
            self.legal = self.compute_legal(&self.state.species, true);
            if self.legal.is_empty() {
                self.state.outcome = Outcome::DeadEnd;
                reward = self.config.rewards.dead_end;
            }
        }
        ResetReport {
            observation: self.observation(),
            reward,
            done: self.state.done(),
        }
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Deterministically ordered by (template id, site key, reactant
    /// forms). Empty once the episode is over.
    pub fn legal_actions(&self) -> &[ActionInstance] {
        &self.legal
    }

    /// One line per completed step:
    /// `T <t> <template>@<site> -> <forms> r=<reward>`.
    pub fn trace(&self) -> &[String] {
        &self.trace
    }

    pub fn step(&mut self, action_index: usize) -> Result<StepReport, EnvError> {
        if self.state.done() {
            return Err(EnvError::EpisodeOver(self.state.outcome.as_str()));
        }
        let action = self
            .legal
            .get(action_index)
            .ok_or(EnvError::BadActionIndex {
                index: action_index,
                len: self.legal.len(),
            })?
            .clone();

        self.state.species = action.successor.clone();
        self.state.t += 1;
        let t = self.state.t;

        let reward;
        if self.state.species.contains_key(&self.config.goal) {
            self.state.outcome = Outcome::Goal;
            reward = self.config.rewards.goal_reward(t);
            self.legal.clear();
        } else {
            if self.config.forbid_revisit {
                self.visited.insert(self.state.species.clone());
            }
            self.legal = self.compute_legal(&self.state.species, true);
            if self.legal.is_empty() {
                self.state.outcome = Outcome::DeadEnd;
                reward = self.config.rewards.dead_end;
            } else if t >= self.config.max_steps {
                self.state.outcome = Outcome::Timeout;
                reward = self.config.rewards.timeout;
                self.legal.clear();
            } else {
                reward = 0.0;
            }
        }

        self.trace.push(format!(
            "T {} {}@{} -> {} r={}",
            t,
            action.template_id,
            action.site_key,
            join_forms(&self.state.species),
            reward
        ));

        Ok(StepReport {
            observation: self.observation(),
            reward,
            done: self.state.done(),
        })
    }

    /// Observation of the current state: OR-fold of the fingerprints of
    /// the non-auxiliary species present, plus the step fraction.
    pub fn observation(&self) -> Observation {
        Observation {
            bits: self.fold_bits(&self.state.species),
            step_frac: f64::from(self.state.t) / f64::from(self.config.max_steps),
        }
    }

    /// Observation bits of an action's successor, without committing the
    /// transition.
    pub fn afterstate_bits(&self, action_index: usize) -> Result<BitVec, EnvError> {
        if self.state.done() {
            return Err(EnvError::EpisodeOver(self.state.outcome.as_str()));
        }
        let action = self
            .legal
            .get(action_index)
            .ok_or(EnvError::BadActionIndex {
                index: action_index,
                len: self.legal.len(),
            })?;
        Ok(self.fold_bits(&action.successor))
    }

    /// The transition structure from an arbitrary multiset, ignoring
    /// episode history (no revisit filtering). This is what the state
    /// graph is built from.
    pub fn actions_from(&self, species: &StateKey) -> Vec<ActionInstance> {
        self.compute_legal(species, false)
    }

    fn fold_bits(&self, species: &StateKey) -> BitVec {
        let mut bits = BitVec::zeros(self.config.fingerprint.n_bits);
        for form in species.keys() {
            if self.aux_forms.contains(form) {
                continue;
            }
            let m = parse_smiles(form.as_str()).expect("tracked forms parse");
            bits.or_assign(&morgan_fingerprint(&m, self.config.fingerprint));
        }
        bits
    }

    fn compute_legal(&self, species: &StateKey, respect_visited: bool) -> Vec<ActionInstance> {
        let mut out = match (&self.config.backend, &self.index) {
            (Backend::Dataset(net), Some(index)) => self.legal_dataset(net, index, species),
            (Backend::Live { catalog, filter }, _) => self.legal_live(catalog, filter, species),
            (Backend::Dataset(_), None) => unreachable!("index built in Env::new"),
        };
        if respect_visited && self.config.forbid_revisit {
            out.retain(|a| !self.visited.contains(&a.successor));
        }
        for (i, a) in out.iter_mut().enumerate() {
            a.index = i;
        }
        out
    }

    fn legal_dataset(
        &self,
        net: &ReactionNetwork,
        index: &DatasetIndex,
        species: &StateKey,
    ) -> Vec<ActionInstance> {
        let mut ids: BTreeMap<usize, u32> = BTreeMap::new();
        for (form, &n) in species {
            let id = *index
                .form_to_id
                .get(form)
                .expect("tracked species come from the network");
            ids.insert(id, n);
        }
        let mut candidates: BTreeSet<usize> = BTreeSet::new();
        for &id in ids.keys() {
            candidates.extend(index.by_species[id].iter().copied());
        }

        // Candidate order is reaction-id order, which is already the
        // (template, site, reactant-forms) order of the legal list.
        let mut out = Vec::new();
        for r_idx in candidates {
            let Some((req, adds)) = &index.reactions[r_idx] else {
                continue;
            };
            if !covers(req, &ids) {
                continue;
            }
            let mut succ_ids = ids.clone();
            subtract(&mut succ_ids, req);
            for &id in adds {
                *succ_ids.entry(id).or_insert(0) += 1;
            }
            let successor: StateKey = succ_ids
                .into_iter()
                .map(|(id, n)| (net.species[id].canonical.clone(), n))
                .collect();
            let r = &net.reactions[r_idx];
            out.push(ActionInstance {
                index: 0,
                template_id: r.template_id.clone(),
                site_key: r.site_key.clone(),
                reactants: r
                    .reactant_ids
                    .iter()
                    .map(|&id| net.species[id].canonical.clone())
                    .collect(),
                successor,
            });
        }
        out
    }

    fn legal_live(
        &self,
        catalog: &Catalog,
        filter: &SpeciesFilter,
        species: &StateKey,
    ) -> Vec<ActionInstance> {
        let forms: Vec<&CanonicalForm> = species.keys().collect();
        let mols: Vec<MolGraph> = forms
            .iter()
            .map(|f| parse_smiles(f.as_str()).expect("tracked forms parse"))
            .collect();
        let aux = match self.config.aux_pool {
            AuxPool::Inexhaustible => AuxAvailability::Inexhaustible,
            AuxPool::Counted => AuxAvailability::Counted(species),
        };

        let mut out = Vec::new();
        for er in enumerate_reactions(catalog, &mols, aux) {
            if er.products.iter().any(|(m, _)| !filter.admits(m)) {
                continue;
            }
            let template = &catalog.templates()[er.template_idx];
            let principal = forms[er.reactant_idx];
            // Episode states never track ambient species, but
            // `actions_from` accepts arbitrary multisets; a reaction whose
            // only reactant is ambient is a state-preserving null action.
            if self.pool.contains(principal) {
                continue;
            }

            let mut req: StateKey = StateKey::new();
            req.insert(principal.clone(), 1);
            if self.config.aux_pool == AuxPool::Counted {
                for (_, c) in &template.consumes {
                    *req.entry(c.clone()).or_insert(0) += 1;
                }
            }
            // enumerate_reactions checks bath availability against the
            // whole state; the principal copy overlaps that check, so
            // recheck the combined requirement.
            if !covers(&req, species) {
                continue;
            }

            let mut succ = species.clone();
            subtract(&mut succ, &req);
            match self.config.aux_pool {
                AuxPool::Inexhaustible => {
                    for (_, c) in &er.products {
                        if !self.pool.contains(c) {
                            *succ.entry(c.clone()).or_insert(0) += 1;
                        }
                    }
                }
                AuxPool::Counted => {
                    for (_, c) in er.products.iter().chain(&template.produces) {
                        *succ.entry(c.clone()).or_insert(0) += 1;
                    }
                }
            }
            out.push(ActionInstance {
                index: 0,
                template_id: template.id.clone(),
                site_key: er.site_key,
                reactants: vec![principal.clone()],
                successor: succ,
            });
        }
        out
    }
}

fn covers<K: Ord>(req: &BTreeMap<K, u32>, have: &BTreeMap<K, u32>) -> bool {
    req.iter()
        .all(|(k, &n)| have.get(k).copied().unwrap_or(0) >= n)
}

/// Requires `covers(req, have)`.
fn subtract<K: Ord>(have: &mut BTreeMap<K, u32>, req: &BTreeMap<K, u32>) {
    for (k, &n) in req {
        let c = have.get_mut(k).expect("requirement covered");
        *c -= n;
        if *c == 0 {
            have.remove(k);
        }
    }
}

fn join_forms(species: &StateKey) -> String {
    species
        .iter()
        .flat_map(|(f, &n)| std::iter::repeat(f.as_str()).take(n as usize))
        .collect::<Vec<_>>()
        .join(" ")
}
