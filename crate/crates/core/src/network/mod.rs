//! Reaction networks: fixpoint expansion of a rule catalog from a set of
//! starting species, reversal, and a line-oriented text format.
//!
//! A network is purely structural. It records which species exist and
//! which instantiated reactions connect them; what a *state* is (which
//! species you hold, what the proton/water bath does) is the environment's
//! concern. Species referenced by a template's consume/produce
//! declarations are flagged auxiliary so downstream layers can treat them
//! as an ambient bath.

mod expand;
mod io;

pub use expand::{expand, ExpandLimits, SpeciesFilter};
pub use io::{load, save};

use crate::molgraph::{CanonicalForm, MolGraph};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum NetworkError {
    #[error("no initial species given")]
    EmptyInitial,
    #[error("initial species {0} fails the species filter")]
    InitialRejected(String),
    #[error("species {0} is not in the network")]
    UnknownSpecies(String),
    #[error("reversal needs a goal and exactly one non-auxiliary initial species, got {0}")]
    NotReversible(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {reason}")]
    Format {
        path: String,
        line: usize,
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Species {
    pub canonical: CanonicalForm,
    /// (carbons, oxygens, total hydrogens)
    pub formula: (u32, u32, u32),
    pub charge: i32,
    /// Appears in a consume/produce declaration of the generating catalog
    /// (the proton/water bath).
    pub auxiliary: bool,
}

/// One instantiated reaction. Ids index [`ReactionNetwork::species`].
///
/// `product_ids` lists every product component the rewrite yields;
/// `aux_consumed`/`aux_produced` list only the template's declared bath
/// species. Balance therefore holds record-locally:
/// reactants + aux_consumed == products + aux_produced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reaction {
    pub template_id: String,
    pub site_key: String,
    pub reactant_ids: Vec<usize>,
    pub product_ids: Vec<usize>,
    pub aux_consumed: Vec<usize>,
    pub aux_produced: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// No rule application yields anything new.
    Fixpoint,
    /// The species cap stopped discovery; reactions among known species
    /// were still recorded.
    SpeciesCap,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Fixpoint => "fixpoint",
            Termination::SpeciesCap => "species-cap",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReactionNetwork {
    /// Species in discovery order: the initial species first (input
    /// order), then products breadth-first. Ids are list positions and do
    /// not change when the species cap is raised.
    pub species: Vec<Species>,
    /// Sorted by (template_id, site_key, reactant canonical forms); ids
    /// are list positions.
    pub reactions: Vec<Reaction>,
    pub initial_ids: Vec<usize>,
    pub goal_id: Option<usize>,
    pub catalog_hash: u64,
    pub filter_desc: String,
    pub termination: Termination,
}

impl ReactionNetwork {
    pub fn find_species(&self, canonical: &CanonicalForm) -> Option<usize> {
        self.species.iter().position(|s| &s.canonical == canonical)
    }

    pub fn molecule(&self, id: usize) -> MolGraph {
        crate::molgraph::parse_smiles(self.species[id].canonical.as_str())
            .expect("stored canonical forms always parse")
    }

    pub fn set_goal(&mut self, canonical: &CanonicalForm) -> Result<(), NetworkError> {
        match self.find_species(canonical) {
            Some(id) => {
                self.goal_id = Some(id);
                Ok(())
            }
            None => Err(NetworkError::UnknownSpecies(canonical.as_str().into())),
        }
    }

    pub fn catalog_matches(&self, catalog: &crate::rules::Catalog) -> bool {
        self.catalog_hash == catalog.content_hash()
    }

    /// Swap every reaction's sides and exchange the principal initial
    /// species with the goal. Requires a goal and exactly one
    /// non-auxiliary initial species; auxiliary initials keep their
    /// positions, so the operation is an involution.
    pub fn reverse(&self) -> Result<ReactionNetwork, NetworkError> {
        let goal_id = self.goal_id.ok_or_else(|| {
            NetworkError::NotReversible("no goal set".into())
        })?;
        let principals: Vec<usize> = self
            .initial_ids
            .iter()
            .copied()
            .filter(|&id| !self.species[id].auxiliary)
            .collect();
        let [principal] = principals[..] else {
            return Err(NetworkError::NotReversible(format!(
                "{} principals",
                principals.len()
            )));
        };

        let mut reactions: Vec<Reaction> = self
            .reactions
            .iter()
            .map(|r| Reaction {
                template_id: r.template_id.clone(),
                site_key: r.site_key.clone(),
                reactant_ids: r.product_ids.clone(),
                product_ids: r.reactant_ids.clone(),
                aux_consumed: r.aux_produced.clone(),
                aux_produced: r.aux_consumed.clone(),
            })
            .collect();
        sort_reactions(&mut reactions, &self.species);

        let initial_ids = self
            .initial_ids
            .iter()
            .map(|&id| if id == principal { goal_id } else { id })
            .collect();

        Ok(ReactionNetwork {
            species: self.species.clone(),
            reactions,
            initial_ids,
            goal_id: Some(principal),
            catalog_hash: self.catalog_hash,
            filter_desc: self.filter_desc.clone(),
            termination: self.termination,
        })
    }
}

fn sort_reactions(reactions: &mut [Reaction], species: &[Species]) {
    reactions.sort_by_cached_key(|r| {
        (
            r.template_id.clone(),
            r.site_key.clone(),
            r.reactant_ids
                .iter()
                .map(|&id| species[id].canonical.as_str().to_owned())
                .collect::<Vec<_>>(),
        )
    });
}

#[cfg(test)]
mod tests;
