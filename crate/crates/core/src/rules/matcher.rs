//! Backtracking subgraph matcher with induced semantics.
//!
//! Pattern atoms are placed one at a time along a connectivity order, so
//! every placement after the first is anchored to an already-mapped
//! neighbor and can be checked incrementally: atom constraints, required
//! bonds to mapped atoms, and the induced condition that pattern non-edges
//! are absent in the molecule.

use super::{Match, Pattern, ReactionTemplate};
use crate::molgraph::MolGraph;

/// Every constraint-satisfying injective mapping, in DFS discovery order
/// (candidates tried in ascending atom index). No site deduplication; this
/// is the raw enumeration that [`find_matches`] post-processes, exposed so
/// tests can compare it against brute force.
pub fn enumerate_mappings(pattern: &Pattern, mol: &MolGraph) -> Vec<Vec<usize>> {
    let n_pat = pattern.atoms.len();
    if n_pat == 0 || n_pat > mol.atom_count() {
        return Vec::new();
    }
    let order = placement_order(pattern);
    let mut mapping = vec![usize::MAX; n_pat];
    let mut used = vec![false; mol.atom_count()];
    let mut found = Vec::new();
    place(pattern, mol, &order, 0, &mut mapping, &mut used, &mut found);
    found
}

/// Matches of a template in a molecule, one per reaction center: mappings
/// whose site keys coincide are automorphism-equivalent and collapse to the
/// lexicographically smallest mapping. Result is sorted by site key.
pub fn find_matches(template: &ReactionTemplate, mol: &MolGraph) -> Vec<Match> {
    let mut mappings = enumerate_mappings(&template.pattern, mol);
    mappings.sort_unstable();
    let mut matches: Vec<Match> = Vec::new();
    for mapping in mappings {
        let key = super::site_key(mol, &mapping);
        if matches.iter().any(|m| m.site_key == key) {
            continue;
        }
        matches.push(Match {
            template_id: template.id.clone(),
            mapping,
            site_key: key,
        });
    }
    matches.sort_by(|a, b| a.site_key.cmp(&b.site_key));
    matches
}

/// Pattern atom visit order in which every atom after the first has a
/// pattern bond to some earlier atom. Patterns are validated connected, so
/// this always covers all atoms.
fn placement_order(pattern: &Pattern) -> Vec<usize> {
    let n = pattern.atoms.len();
    let mut order = vec![0usize];
    let mut placed = vec![false; n];
    placed[0] = true;
    while order.len() < n {
        let next = (0..n)
            .find(|&i| {
                !placed[i]
                    && pattern
                        .bonds
                        .iter()
                        .any(|b| (b.a == i && placed[b.b]) || (b.b == i && placed[b.a]))
            })
            .expect("pattern is connected");
        placed[next] = true;
        order.push(next);
    }
    order
}

#[allow(clippy::too_many_arguments)]
fn place(
    pattern: &Pattern,
    mol: &MolGraph,
    order: &[usize],
    depth: usize,
    mapping: &mut Vec<usize>,
    used: &mut Vec<bool>,
    found: &mut Vec<Vec<usize>>,
) {
    if depth == order.len() {
        found.push(mapping.clone());
        return;
    }
    let p = order[depth];
    for cand in 0..mol.atom_count() {
        if used[cand] || !pattern.atoms[p].satisfied_by(mol, cand) {
            continue;
        }
        if !edges_consistent(pattern, mol, mapping, p, cand) {
            continue;
        }
        mapping[p] = cand;
        used[cand] = true;
        place(pattern, mol, order, depth + 1, mapping, used, found);
        used[cand] = false;
        mapping[p] = usize::MAX;
    }
}

/// Checks atom `cand` (to play pattern role `p`) against every already-
/// placed pattern atom: required bonds must exist with matching order and
/// ring flag, and pattern non-edges must be molecule non-edges.
fn edges_consistent(
    pattern: &Pattern,
    mol: &MolGraph,
    mapping: &[usize],
    p: usize,
    cand: usize,
) -> bool {
    for (q, &mq) in mapping.iter().enumerate() {
        if mq == usize::MAX || q == p {
            continue;
        }
        match pattern.bond_between(p, q) {
            Some(req) => {
                if mol.bond_between(cand, mq) != Some(req.order) {
                    return false;
                }
                if let Some(ring) = req.in_ring {
                    if mol.bond_in_ring(cand, mq) != ring {
                        return false;
                    }
                }
            }
            None => {
                if mol.bond_between(cand, mq).is_some() {
                    return false;
                }
            }
        }
    }
    true
}
