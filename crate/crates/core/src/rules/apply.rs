//! Applies a template's edit script at a matched site.
//!
//! Edits run on a scratch copy of the molecule; validity (valence, charge
//! range) is judged only on the final result, so scripts may pass through
//! transient invalid states. The edited graph is split into connected
//! components, each returned as its own product. Element/H/charge balance
//! against the template's declared bath species is asserted on every call:
//! a violation is an authoring bug in the catalog, not a runtime condition.

use super::{Edit, Match, ReactionTemplate};
use crate::molgraph::{canonicalize, Atom, Bond, BondOrder, MolError, MolGraph};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Error, Debug, PartialEq, Eq)]
pub enum ApplyError {
    /// The mapping no longer satisfies the pattern on this molecule.
    #[error("match is stale: mapping no longer satisfies the pattern")]
    StaleMatch,
    /// An edit addressed a bond or atom inconsistently with the graph.
    #[error("edit script broke: {0}")]
    BrokenEdit(String),
    /// The edited result violates a molecular invariant at some atom; the
    /// match was chemically inadmissible for this template.
    #[error("product invalid after edit: {0}")]
    InvalidProduct(MolError),
}

pub fn apply(
    template: &ReactionTemplate,
    mol: &MolGraph,
    m: &Match,
) -> Result<Vec<MolGraph>, ApplyError> {
    if !mapping_is_current(template, mol, &m.mapping) {
        return Err(ApplyError::StaleMatch);
    }

    // Scratch state: h as signed so scripts can dip negative mid-flight.
    let mut atoms: Vec<(crate::molgraph::Element, i8, i32)> = mol
        .atoms()
        .iter()
        .map(|a| (a.element, a.formal_charge, i32::from(a.implicit_h)))
        .collect();
    let mut bonds: BTreeMap<(usize, usize), BondOrder> = mol
        .bonds()
        .iter()
        .map(|b| ((b.a, b.b), b.order))
        .collect();

    let n_pattern = template.pattern.atoms.len();
    let n_orig = mol.atom_count();
    let mut n_attached = 0usize;
    let resolve = |idx: usize, n_attached: usize| -> Result<usize, ApplyError> {
        if idx < n_pattern {
            Ok(m.mapping[idx])
        } else if idx - n_pattern < n_attached {
            Ok(n_orig + (idx - n_pattern))
        } else {
            Err(ApplyError::BrokenEdit(format!(
                "edit refers to atom {idx} before it is attached"
            )))
        }
    };
    let key = |i: usize, j: usize| (i.min(j), i.max(j));

    for edit in &template.edits {
        match *edit {
            Edit::AddBond(i, j, order) => {
                let (i, j) = (resolve(i, n_attached)?, resolve(j, n_attached)?);
                if bonds.insert(key(i, j), order).is_some() {
                    return Err(ApplyError::BrokenEdit(format!(
                        "add_bond over existing bond {i}-{j}"
                    )));
                }
            }
            Edit::RemoveBond(i, j) => {
                let (i, j) = (resolve(i, n_attached)?, resolve(j, n_attached)?);
                if bonds.remove(&key(i, j)).is_none() {
                    return Err(ApplyError::BrokenEdit(format!(
                        "remove_bond on missing bond {i}-{j}"
                    )));
                }
            }
            Edit::SetBond(i, j, order) => {
                let (i, j) = (resolve(i, n_attached)?, resolve(j, n_attached)?);
                match bonds.get_mut(&key(i, j)) {
                    Some(o) => *o = order,
                    None => {
                        return Err(ApplyError::BrokenEdit(format!(
                            "set_bond on missing bond {i}-{j}"
                        )))
                    }
                }
            }
            Edit::SetCharge(i, q) => {
                let i = resolve(i, n_attached)?;
                atoms[i].1 = q;
            }
            Edit::AddH(i, delta) => {
                let i = resolve(i, n_attached)?;
                atoms[i].2 += i32::from(delta);
            }
            Edit::Attach {
                to,
                element,
                charge,
                h,
                order,
            } => {
                let to = resolve(to, n_attached)?;
                let new_idx = atoms.len();
                atoms.push((element, charge, i32::from(h)));
                bonds.insert(key(to, new_idx), order);
                n_attached += 1;
            }
        }
    }

    let products = split_components(&atoms, &bonds)?;
    assert_balanced(template, mol, &products);

    let mut with_keys: Vec<(String, MolGraph)> = products
        .into_iter()
        .map(|p| (canonicalize(&p).into_string(), p))
        .collect();
    with_keys.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(with_keys.into_iter().map(|(_, p)| p).collect())
}

fn mapping_is_current(template: &ReactionTemplate, mol: &MolGraph, mapping: &[usize]) -> bool {
    let pattern = &template.pattern;
    if mapping.len() != pattern.atoms.len() {
        return false;
    }
    if mapping.iter().any(|&i| i >= mol.atom_count()) {
        return false;
    }
    let mut seen = vec![false; mol.atom_count()];
    for &i in mapping {
        if std::mem::replace(&mut seen[i], true) {
            return false;
        }
    }
    for (p, c) in pattern.atoms.iter().enumerate() {
        if !c.satisfied_by(mol, mapping[p]) {
            return false;
        }
    }
    for p in 0..pattern.atoms.len() {
        for q in (p + 1)..pattern.atoms.len() {
            let have = mol.bond_between(mapping[p], mapping[q]);
            match pattern.bond_between(p, q) {
                Some(req) => {
                    if have != Some(req.order) {
                        return false;
                    }
                    if let Some(ring) = req.in_ring {
                        if mol.bond_in_ring(mapping[p], mapping[q]) != ring {
                            return false;
                        }
                    }
                }
                None => {
                    if have.is_some() {
                        return false;
                    }
                }
            }
        }
    }
    true
}

fn split_components(
    atoms: &[(crate::molgraph::Element, i8, i32)],
    bonds: &BTreeMap<(usize, usize), BondOrder>,
) -> Result<Vec<MolGraph>, ApplyError> {
    let n = atoms.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j) in bonds.keys() {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut component = vec![usize::MAX; n];
    let mut n_components = 0usize;
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        component[start] = n_components;
        while let Some(i) = stack.pop() {
            for &j in &adj[i] {
                if component[j] == usize::MAX {
                    component[j] = n_components;
                    stack.push(j);
                }
            }
        }
        n_components += 1;
    }

    let mut products = Vec::with_capacity(n_components);
    for c in 0..n_components {
        let members: Vec<usize> = (0..n).filter(|&i| component[i] == c).collect();
        let mut local = vec![usize::MAX; n];
        for (li, &gi) in members.iter().enumerate() {
            local[gi] = li;
        }
        let comp_atoms: Result<Vec<Atom>, ApplyError> = members
            .iter()
            .map(|&gi| {
                let (element, charge, h) = atoms[gi];
                let implicit_h = u8::try_from(h).map_err(|_| {
                    ApplyError::InvalidProduct(MolError::Valence {
                        atom: local[gi],
                        implicit_h: 0,
                        effective: crate::molgraph::effective_valence(element, charge),
                        bond_sum: 0,
                    })
                })?;
                Ok(Atom {
                    element,
                    formal_charge: charge,
                    implicit_h,
                })
            })
            .collect();
        let comp_bonds: Vec<Bond> = bonds
            .iter()
            .filter(|(&(i, _), _)| component[i] == c)
            .map(|(&(i, j), &order)| Bond {
                a: local[i],
                b: local[j],
                order,
            })
            .collect();
        products.push(MolGraph::new(comp_atoms?, comp_bonds).map_err(ApplyError::InvalidProduct)?);
    }
    Ok(products)
}

/// Element counts (C, O), total hydrogen, and net charge must balance over
/// reactant + consumed bath vs products + produced bath.
fn assert_balanced(template: &ReactionTemplate, reactant: &MolGraph, products: &[MolGraph]) {
    let tally = |mols: &[&MolGraph]| -> (u32, u32, u32, i32) {
        let mut t = (0u32, 0u32, 0u32, 0i32);
        for m in mols {
            let (c, o, h) = m.formula();
            t.0 += c;
            t.1 += o;
            t.2 += h;
            t.3 += m.total_charge();
        }
        t
    };
    let lhs_mols: Vec<&MolGraph> = std::iter::once(reactant)
        .chain(template.consumes.iter().map(|(m, _)| m))
        .collect();
    let rhs_mols: Vec<&MolGraph> = products
        .iter()
        .chain(template.produces.iter().map(|(m, _)| m))
        .collect();
    let lhs = tally(&lhs_mols);
    let rhs = tally(&rhs_mols);
    assert_eq!(
        lhs, rhs,
        "template {} is not mass/charge balanced: lhs (C,O,H,q)={lhs:?} rhs={rhs:?}",
        template.id
    );
}
