//! Breadth-first fixpoint expansion.

use super::{sort_reactions, NetworkError, Reaction, ReactionNetwork, Species, Termination};
use crate::molgraph::{canonicalize, CanonicalForm, MolGraph};
use crate::rules::{enumerate_reactions, AuxAvailability, Catalog};
use std::collections::BTreeMap;
use std::fmt;

/// Which product species are admitted into the network. A reaction is
/// recorded only if every one of its product components passes; a single
/// oversized or over-charged component drops the whole reaction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpeciesFilter {
    pub min_charge: i32,
    pub max_charge: i32,
    pub max_heavy_atoms: usize,
}

impl Default for SpeciesFilter {
    /// Neutral and singly protonated species up to 13 heavy atoms: room
    /// for a hexose plus small fragments, nothing runaway.
    fn default() -> Self {
        SpeciesFilter {
            min_charge: 0,
            max_charge: 1,
            max_heavy_atoms: 13,
        }
    }
}

impl SpeciesFilter {
    pub fn admits(&self, mol: &MolGraph) -> bool {
        let q = mol.total_charge();
        q >= self.min_charge && q <= self.max_charge && mol.atom_count() <= self.max_heavy_atoms
    }

    /// `charge:<lo>..<hi>,heavy:<=<n>` — the descriptor embedded in the
    /// network file header.
    pub fn descriptor(&self) -> String {
        format!(
            "charge:{}..{},heavy:<={}",
            self.min_charge, self.max_charge, self.max_heavy_atoms
        )
    }

    pub fn from_descriptor(desc: &str) -> Option<SpeciesFilter> {
        let (charge, heavy) = desc.split_once(',')?;
        let range = charge.strip_prefix("charge:")?;
        let (lo, hi) = range.split_once("..")?;
        let heavy = heavy.strip_prefix("heavy:<=")?;
        Some(SpeciesFilter {
            min_charge: lo.parse().ok()?,
            max_charge: hi.parse().ok()?,
            max_heavy_atoms: heavy.parse().ok()?,
        })
    }
}

impl fmt::Display for SpeciesFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.descriptor())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ExpandLimits {
    /// Soft cap on distinct species: discovery freezes once the count
    /// reaches it (overshoot of at most one reaction's products), after
    /// which the remaining frontier is still drained for reactions among
    /// known species. Results for a smaller cap are an exact prefix of a
    /// larger cap's.
    pub max_species: usize,
}

impl Default for ExpandLimits {
    fn default() -> Self {
        ExpandLimits { max_species: 50_000 }
    }
}

/// Expand `initial` under `catalog` until no reaction yields a new species
/// (or the cap bites). Deterministic: species ids follow discovery order,
/// reaction ids follow the (template, site, reactant-forms) sort.
pub fn expand(
    initial: &[MolGraph],
    catalog: &Catalog,
    filter: &SpeciesFilter,
    limits: &ExpandLimits,
) -> Result<ReactionNetwork, NetworkError> {
    if initial.is_empty() {
        return Err(NetworkError::EmptyInitial);
    }

    let aux_forms = catalog.bath_forms();

    let mut table = SpeciesTable {
        species: Vec::new(),
        mols: Vec::new(),
        index: BTreeMap::new(),
        aux_forms,
    };

    let mut initial_ids = Vec::new();
    for mol in initial {
        if !filter.admits(mol) {
            return Err(NetworkError::InitialRejected(
                canonicalize(mol).into_string(),
            ));
        }
        let id = table.intern(mol);
        if !initial_ids.contains(&id) {
            initial_ids.push(id);
        }
    }

    let mut reactions: Vec<Reaction> = Vec::new();
    let mut termination = Termination::Fixpoint;
    let mut next = 0usize;
    while next < table.species.len() {
        let id = next;
        next += 1;
        let subject = table.mols[id].clone();
        for r in enumerate_reactions(catalog, &[subject], AuxAvailability::Inexhaustible) {
            if r.products.iter().any(|(mol, _)| !filter.admits(mol)) {
                continue;
            }
            let template = &catalog.templates()[r.template_idx];
            // Soft cap: while under it, everything is admitted (so runs
            // with different caps stay in lockstep and small-cap results
            // are exact prefixes of large-cap ones); once at or over it,
            // discovery freezes and only reactions between already-known
            // species are recorded.
            if table.species.len() >= limits.max_species {
                let novel = r
                    .products
                    .iter()
                    .map(|(_, c)| c)
                    .chain(template.consumes.iter().map(|(_, c)| c))
                    .chain(template.produces.iter().map(|(_, c)| c))
                    .any(|c| !table.index.contains_key(c));
                if novel {
                    termination = Termination::SpeciesCap;
                    continue;
                }
            }
            let ids = |decls: &[(MolGraph, CanonicalForm)], table: &mut SpeciesTable| {
                decls
                    .iter()
                    .map(|(mol, _)| table.intern(mol))
                    .collect::<Vec<usize>>()
            };
            reactions.push(Reaction {
                template_id: template.id.clone(),
                site_key: r.site_key,
                reactant_ids: vec![id],
                product_ids: ids(&r.products, &mut table),
                aux_consumed: ids(&template.consumes, &mut table),
                aux_produced: ids(&template.produces, &mut table),
            });
        }
    }

    sort_reactions(&mut reactions, &table.species);
    Ok(ReactionNetwork {
        species: table.species,
        reactions,
        initial_ids,
        goal_id: None,
        catalog_hash: catalog.content_hash(),
        filter_desc: filter.descriptor(),
        termination,
    })
}

struct SpeciesTable {
    species: Vec<Species>,
    mols: Vec<MolGraph>,
    index: BTreeMap<CanonicalForm, usize>,
    aux_forms: Vec<CanonicalForm>,
}

impl SpeciesTable {
    fn intern(&mut self, mol: &MolGraph) -> usize {
        let canonical = canonicalize(mol);
        if let Some(&id) = self.index.get(&canonical) {
            return id;
        }
        let id = self.species.len();
        self.index.insert(canonical.clone(), id);
        self.species.push(Species {
            auxiliary: self.aux_forms.contains(&canonical),
            formula: mol.formula(),
            charge: mol.total_charge(),
            canonical,
        });
        self.mols.push(mol.clone());
        id
    }
}

