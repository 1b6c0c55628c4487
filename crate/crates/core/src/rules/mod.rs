//! Reaction templates and the machinery that instantiates them.
//!
//! A template is a connected substructure pattern plus an edit script.
//! Matching is induced: pattern atoms must map injectively onto molecule
//! atoms so that required bonds exist with the right order AND pairs of
//! pattern atoms without a pattern bond are unbonded in the molecule.
//! Every distinct reaction center yields its own match; centers that an
//! automorphism of the molecule maps onto each other are collapsed by a
//! canonical site key, because they produce isomorphic products.
//!
//! Templates may declare consumed/produced bath species (water, hydronium)
//! for proton transfers. Mass and charge balance over
//! (reactant + consumed) vs (products + produced) is asserted on every
//! application.

mod apply;
mod catalog;
mod matcher;

pub use apply::{apply, ApplyError};
pub use catalog::{default_catalog, Catalog, CatalogError};
pub use matcher::{enumerate_mappings, find_matches};

use crate::molgraph::{canonicalize, BondOrder, CanonicalForm, Element, MolGraph};
use std::collections::BTreeMap;

/// Constraints an atom of the molecule must satisfy to play a pattern role.
/// Unset fields match anything.
#[derive(Clone, Default, Debug, PartialEq, Eq)]
pub struct AtomConstraint {
    pub element: Option<Element>,
    pub charge: Option<i8>,
    pub min_h: Option<u8>,
    pub exact_h: Option<u8>,
    pub in_ring: Option<bool>,
    /// Minimum number of oxygen neighbours. Gates templates to
    /// oxygen-activated carbons so eliminations and shifts stay near
    /// functionalized centers instead of walking bare alkyl chains.
    pub min_o_neighbors: Option<u8>,
    /// Maximum number of oxygen neighbours (counting double-bonded ones).
    pub max_o_neighbors: Option<u8>,
    /// When true, every bond at this atom must be single order; rewrites
    /// that form a second pi bond at one carbon would otherwise emit
    /// cumulated dienes and ketenes, which this chemistry never produces.
    pub saturated: Option<bool>,
}

impl AtomConstraint {
    pub fn satisfied_by(&self, mol: &MolGraph, atom: usize) -> bool {
        let a = mol.atom(atom);
        self.element.map_or(true, |e| a.element == e)
            && self.charge.map_or(true, |q| a.formal_charge == q)
            && self.min_h.map_or(true, |m| a.implicit_h >= m)
            && self.exact_h.map_or(true, |n| a.implicit_h == n)
            && self.in_ring.map_or(true, |r| mol.atom_in_ring(atom) == r)
            && (self.min_o_neighbors.is_none() && self.max_o_neighbors.is_none() || {
                let n = mol
                    .neighbors(atom)
                    .iter()
                    .filter(|(j, _)| mol.atom(*j).element == Element::O)
                    .count();
                self.min_o_neighbors.map_or(true, |m| n >= m as usize)
                    && self.max_o_neighbors.map_or(true, |m| n <= m as usize)
            })
            && self.saturated.map_or(true, |s| {
                let any_multi = mol
                    .neighbors(atom)
                    .iter()
                    .any(|(_, o)| *o != BondOrder::Single);
                any_multi != s
            })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BondConstraint {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
    pub in_ring: Option<bool>,
}

/// Connected substructure pattern, at most [`Pattern::MAX_ATOMS`] atoms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pattern {
    pub atoms: Vec<AtomConstraint>,
    pub bonds: Vec<BondConstraint>,
}

impl Pattern {
    pub const MAX_ATOMS: usize = 8;

    /// Required bond between two pattern atoms, if any.
    pub fn bond_between(&self, i: usize, j: usize) -> Option<&BondConstraint> {
        self.bonds
            .iter()
            .find(|b| (b.a == i && b.b == j) || (b.a == j && b.b == i))
    }

    fn is_connected(&self) -> bool {
        let n = self.atoms.len();
        if n == 0 {
            return false;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for b in &self.bonds {
                let j = if b.a == i {
                    b.b
                } else if b.b == i {
                    b.a
                } else {
                    continue;
                };
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// One step of a template's edit script. Indices < pattern size refer to
/// matched atoms; `Attach` appends new atoms which later edits may address
/// as pattern_size, pattern_size+1, ...
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Edit {
    AddBond(usize, usize, BondOrder),
    RemoveBond(usize, usize),
    SetBond(usize, usize, BondOrder),
    SetCharge(usize, i8),
    AddH(usize, i8),
    Attach {
        to: usize,
        element: Element,
        charge: i8,
        h: u8,
        order: BondOrder,
    },
}

#[derive(Clone, Debug)]
pub struct ReactionTemplate {
    pub id: String,
    pub name: String,
    pub pattern: Pattern,
    pub edits: Vec<Edit>,
    /// Bath species consumed per application (e.g. hydronium for a
    /// protonation), as parsed molecules with cached canonical forms.
    pub consumes: Vec<(MolGraph, CanonicalForm)>,
    /// Bath species produced per application.
    pub produces: Vec<(MolGraph, CanonicalForm)>,
    /// Template that undoes this one at the corresponding site, if declared.
    pub reverse: Option<String>,
    /// Marks deliberately coarse chemistry kept for rule coverage.
    pub approximate: bool,
}

/// One concrete occurrence of a template in a molecule.
///
/// `mapping[pattern_atom] = molecule_atom`. The `site_key` is the canonical
/// text of the molecule with the matched atoms tagged by their pattern
/// role, so it is equal for two mappings exactly when an automorphism
/// relates them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Match {
    pub template_id: String,
    pub mapping: Vec<usize>,
    pub site_key: String,
}

pub fn site_key(mol: &MolGraph, mapping: &[usize]) -> String {
    let mut roles: Vec<Option<u8>> = vec![None; mol.atom_count()];
    for (pattern_idx, &mol_idx) in mapping.iter().enumerate() {
        roles[mol_idx] = Some(pattern_idx as u8);
    }
    crate::molgraph::canonical_with_roles(mol, &roles)
}

/// Whether a template's consumed bath species are on hand.
#[derive(Clone, Copy, Debug)]
pub enum AuxAvailability<'a> {
    /// Proton/water bath never runs out; every template is applicable.
    Inexhaustible,
    /// Consumed species must be covered by this multiset.
    Counted(&'a BTreeMap<CanonicalForm, u32>),
}

impl AuxAvailability<'_> {
    fn covers(&self, consumes: &[(MolGraph, CanonicalForm)]) -> bool {
        match self {
            AuxAvailability::Inexhaustible => true,
            AuxAvailability::Counted(have) => {
                let mut need: BTreeMap<&CanonicalForm, u32> = BTreeMap::new();
                for (_, c) in consumes {
                    *need.entry(c).or_insert(0) += 1;
                }
                need.iter().all(|(c, n)| have.get(*c).copied().unwrap_or(0) >= *n)
            }
        }
    }
}

/// A fully instantiated reaction: template applied at one site of one
/// species from the input slice.
#[derive(Clone, Debug)]
pub struct EnumeratedReaction {
    pub template_idx: usize,
    pub site_key: String,
    /// Index of the principal reactant in the species slice passed in.
    pub reactant_idx: usize,
    /// Product components sorted by canonical form.
    pub products: Vec<(MolGraph, CanonicalForm)>,
}

/// All reactions available from a set of species, in a fixed total order:
/// (template id, site key, reactant canonical form). Species must already
/// be canonical-deduplicated; matches whose edits would break valence are
/// dropped rather than reported.
pub fn enumerate_reactions(
    catalog: &Catalog,
    species: &[MolGraph],
    aux: AuxAvailability,
) -> Vec<EnumeratedReaction> {
    let canonicals: Vec<CanonicalForm> = species.iter().map(canonicalize).collect();
    let mut out: Vec<(usize, EnumeratedReaction)> = Vec::new();
    for (t_idx, template) in catalog.templates().iter().enumerate() {
        if !aux.covers(&template.consumes) {
            continue;
        }
        for (s_idx, mol) in species.iter().enumerate() {
            for m in find_matches(template, mol) {
                let Ok(products) = apply(template, mol, &m) else {
                    continue;
                };
                let products = products
                    .into_iter()
                    .map(|p| {
                        let c = canonicalize(&p);
                        (p, c)
                    })
                    .collect();
                out.push((
                    s_idx,
                    EnumeratedReaction {
                        template_idx: t_idx,
                        site_key: m.site_key,
                        reactant_idx: s_idx,
                        products,
                    },
                ));
            }
        }
    }
    out.sort_by(|(ia, a), (ib, b)| {
        let ta = &catalog.templates()[a.template_idx].id;
        let tb = &catalog.templates()[b.template_idx].id;
        (ta, &a.site_key, &canonicals[*ia]).cmp(&(tb, &b.site_key, &canonicals[*ib]))
    });
    out.into_iter().map(|(_, r)| r).collect()
}
