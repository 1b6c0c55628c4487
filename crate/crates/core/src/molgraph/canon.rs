//! Exact canonical labeling by iterative neighborhood refinement with a
//! backtracking tie-break.
//!
//! Refinement alone leaves symmetric atoms in shared cells, so the search
//! individualizes each member of the first non-singleton cell in turn,
//! re-refines, and keeps the labeling whose flat encoding (atom attributes
//! plus adjacency, in label order) is lexicographically smallest. Every
//! branch is explored, which makes equality of canonical text hold exactly
//! when two molecules are isomorphic, not just with high probability. The
//! molecules in play are small (a formula cap keeps them at 13 heavy atoms or
//! so), so the worst-case cost of full backtracking is negligible.

use super::{write_smiles, write_smiles_with_roles, MolGraph};

/// Canonical text form of a molecule. Two molecules have equal forms iff
/// they are isomorphic (same elements, charges, hydrogen counts, bonds).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct CanonicalForm(String);

impl CanonicalForm {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    /// Wraps text already known to be canonical (e.g. read back from a
    /// network file written by this crate).
    pub fn from_trusted(text: String) -> Self {
        CanonicalForm(text)
    }
}

impl std::fmt::Display for CanonicalForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn canonicalize(mol: &MolGraph) -> CanonicalForm {
    let order = canonical_labeling(mol, &[]);
    CanonicalForm(write_smiles(&mol.reordered(&order)))
}

/// Canonical text with role-tagged atoms (`extra[i] = Some(role)`).
/// Roles participate in the labeling, so two taggings are equal iff some
/// automorphism maps one onto the other. This is what makes reaction-site
/// keys collapse symmetric sites while keeping genuinely different ones apart.
pub fn canonical_with_roles(mol: &MolGraph, roles: &[Option<u8>]) -> String {
    let extra: Vec<u64> = roles
        .iter()
        .map(|r| r.map_or(0, |k| u64::from(k) + 1))
        .collect();
    let order = canonical_labeling(mol, &extra);
    let new_roles: Vec<Option<u8>> = order.iter().map(|&old| roles[old]).collect();
    write_smiles_with_roles(&mol.reordered(&order), &new_roles)
}

/// Computes the canonical atom ordering: `result[rank] = original index`.
/// `extra` supplies additional per-atom invariants (empty slice for none).
pub fn canonical_labeling(mol: &MolGraph, extra: &[u64]) -> Vec<usize> {
    let n = mol.atom_count();
    let extra_of = |i: usize| extra.get(i).copied().unwrap_or(0);

    // Initial partition by local atom invariants.
    let mut keys: Vec<(u64, Vec<u64>)> = (0..n)
        .map(|i| {
            let a = mol.atom(i);
            let mut orders: Vec<u64> = mol
                .neighbors(i)
                .iter()
                .map(|(_, o)| o.as_int() as u64)
                .collect();
            orders.sort_unstable();
            let head = ((a.element as u64) << 32)
                | ((i32::from(a.formal_charge) + 1) as u64) << 16
                | u64::from(a.implicit_h) << 8
                | mol.degree(i) as u64;
            let mut tail = orders;
            tail.push(extra_of(i));
            (head, tail)
        })
        .collect();
    let colors = rank_by_key(&mut keys);

    let mut search = Search {
        mol,
        extra,
        best: None,
    };
    search.descend(colors);
    let (_, ordering) = search.best.expect("search always yields a labeling");
    ordering
}

struct Search<'a> {
    mol: &'a MolGraph,
    extra: &'a [u64],
    best: Option<(Vec<u64>, Vec<usize>)>,
}

impl<'a> Search<'a> {
    fn descend(&mut self, mut colors: Vec<u32>) {
        refine(self.mol, &mut colors);
        let n = colors.len();
        let distinct = colors.iter().copied().max().unwrap() as usize + 1;
        if distinct == n {
            let mut ordering: Vec<usize> = (0..n).collect();
            ordering.sort_by_key(|&i| colors[i]);
            let enc = self.encode(&ordering);
            let better = match &self.best {
                None => true,
                Some((best_enc, _)) => enc < *best_enc,
            };
            if better {
                self.best = Some((enc, ordering));
            }
            return;
        }

        // First non-singleton cell in color order.
        let mut counts = vec![0usize; distinct];
        for &c in &colors {
            counts[c as usize] += 1;
        }
        let target = counts
            .iter()
            .position(|&c| c > 1)
            .expect("non-discrete partition has a larger cell") as u32;
        for atom in 0..n {
            if colors[atom] != target {
                continue;
            }
            let mut keys: Vec<(u64, Vec<u64>)> = (0..n)
                .map(|i| {
                    let split = u64::from(i != atom || colors[i] != target);
                    ((u64::from(colors[i]) << 1) | split, Vec::new())
                })
                .collect();
            self.descend(rank_by_key(&mut keys));
        }
    }

    /// Flat comparison encoding of the molecule under an ordering: per-atom
    /// attributes in rank order, then the upper adjacency triangle.
    fn encode(&self, ordering: &[usize]) -> Vec<u64> {
        let n = ordering.len();
        let mut inverse = vec![0usize; n];
        for (rank, &old) in ordering.iter().enumerate() {
            inverse[old] = rank;
        }
        let mut enc = Vec::with_capacity(n * 3 + n * (n - 1) / 2);
        for &old in ordering {
            let a = self.mol.atom(old);
            enc.push(
                ((a.element as u64) << 32)
                    | ((i32::from(a.formal_charge) + 1) as u64) << 16
                    | u64::from(a.implicit_h),
            );
            enc.push(self.extra.get(old).copied().unwrap_or(0));
        }
        for r in 0..n {
            for s in (r + 1)..n {
                let order = self
                    .mol
                    .bond_between(ordering[r], ordering[s])
                    .map_or(0, |o| o.as_int() as u64);
                enc.push(order);
            }
        }
        let _ = inverse;
        enc
    }
}

/// Refines colors until stable: each round re-keys every atom by its own
/// color plus the sorted multiset of (bond order, neighbor color) pairs.
/// Refinement only ever splits cells, so an unchanged distinct-color count
/// means a fixed point.
fn refine(mol: &MolGraph, colors: &mut Vec<u32>) {
    loop {
        let before = colors.iter().copied().max().unwrap() as usize + 1;
        let mut keys: Vec<(u64, Vec<u64>)> = (0..colors.len())
            .map(|i| {
                let mut nbr: Vec<u64> = mol
                    .neighbors(i)
                    .iter()
                    .map(|&(j, o)| ((o.as_int() as u64) << 32) | u64::from(colors[j]))
                    .collect();
                nbr.sort_unstable();
                (u64::from(colors[i]), nbr)
            })
            .collect();
        let refined = rank_by_key(&mut keys);
        let after = refined.iter().copied().max().unwrap() as usize + 1;
        *colors = refined;
        if after == before {
            return;
        }
    }
}

/// Dense ranks of the key tuples (equal keys share a rank).
fn rank_by_key(keys: &mut [(u64, Vec<u64>)]) -> Vec<u32> {
    let mut indexed: Vec<(usize, &(u64, Vec<u64>))> = keys.iter().enumerate().collect();
    indexed.sort_by(|a, b| a.1.cmp(b.1));
    let mut colors = vec![0u32; keys.len()];
    let mut rank = 0u32;
    for w in 0..indexed.len() {
        if w > 0 && indexed[w].1 != indexed[w - 1].1 {
            rank += 1;
        }
        colors[indexed[w].0] = rank;
    }
    colors
}

#[cfg(test)]
mod tests {
    use super::super::parse_smiles;
    use super::*;

    fn canon(s: &str) -> String {
        canonicalize(&parse_smiles(s).unwrap()).into_string()
    }

    #[test]
    fn equivalent_inputs_collapse() {
        assert_eq!(canon("OCC(=O)C(O)C(O)C(O)CO"), canon("OCC(O)C(O)C(O)C(=O)CO"));
        assert_eq!(canon("C(O)C"), canon("CCO"));
        assert_eq!(canon("C1CCCO1"), canon("O1CCCC1"));
        assert_eq!(canon("CC(=O)O"), canon("OC(C)=O"));
    }

    #[test]
    fn distinct_molecules_stay_distinct() {
        assert_ne!(canon("O"), canon("[OH3+]"));
        assert_ne!(canon("CCO"), canon("COC"));
        // Glucose and fructose skeletons: same formula, different graphs.
        assert_ne!(canon("OCC(=O)C(O)C(O)C(O)CO"), canon("O=CC(O)C(O)C(O)C(O)CO"));
    }

    #[test]
    fn canonical_text_is_a_fixed_point() {
        for s in ["OCC(=O)C(O)C(O)C(O)CO", "OCC1=CC=C(C=O)O1", "C1CCCO1"] {
            let c1 = canon(s);
            let c2 = canon(&c1);
            assert_eq!(c1, c2);
        }
    }

    #[test]
    fn symmetric_ring_all_relabelings_agree() {
        // Cyclohexane analog: maximal symmetry stresses the backtracking.
        let base = parse_smiles("C1CCCCC1").unwrap();
        let reference = canonicalize(&base);
        let n = base.atom_count();
        // Rotate the atom order a few ways.
        for shift in 0..n {
            let order: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
            assert_eq!(canonicalize(&base.reordered(&order)), reference);
        }
    }

    #[test]
    fn roles_distinguish_sites_up_to_automorphism() {
        // Linear C-C-C: the two end carbons are automorphic, the middle is not.
        let m = parse_smiles("CCC").unwrap();
        let end1 = canonical_with_roles(&m, &[Some(0), None, None]);
        let end2 = canonical_with_roles(&m, &[None, None, Some(0)]);
        let mid = canonical_with_roles(&m, &[None, Some(0), None]);
        assert_eq!(end1, end2);
        assert_ne!(end1, mid);
    }
}
