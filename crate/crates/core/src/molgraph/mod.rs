//! Molecular graphs over carbon and oxygen with implicit hydrogens.
//!
//! Hydrogens are never graph nodes: every atom carries an implicit-H count
//! that must equal its effective valence minus the sum of incident bond
//! orders. Effective valence is 4 for carbon and 2 for oxygen, adjusted for
//! formal charge (a carbocation binds 3, protonated oxygen binds 3, oxide
//! binds 1). A graph is a single connected molecule; states with several
//! molecules are multisets of graphs.

mod canon;
mod fingerprint;
mod parse;
mod write;

pub use canon::{canonical_labeling, canonical_with_roles, canonicalize, CanonicalForm};
pub use fingerprint::{morgan_fingerprint, Fingerprint, FingerprintParams};
pub use parse::{parse_smiles, ParseError};
pub use write::{write_smiles, write_smiles_with_roles};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Element {
    C,
    O,
}

impl Element {
    pub fn symbol(self) -> char {
        match self {
            Element::C => 'C',
            Element::O => 'O',
        }
    }

    pub fn standard_valence(self) -> i32 {
        match self {
            Element::C => 4,
            Element::O => 2,
        }
    }
}

/// Bonding capacity after accounting for formal charge.
///
/// Carbon loses a bonding slot in either ion (CH3+ and CH3- both bind three),
/// oxygen gains one when protonated and loses one as an oxide.
pub fn effective_valence(element: Element, charge: i8) -> i32 {
    match element {
        Element::C => 4 - i32::from(charge.abs()),
        Element::O => 2 + i32::from(charge),
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Atom {
    pub element: Element,
    pub formal_charge: i8,
    pub implicit_h: u8,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum BondOrder {
    Single,
    Double,
}

impl BondOrder {
    pub fn as_int(self) -> i32 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
        }
    }
}

/// Undirected bond; endpoints are kept sorted so `a < b`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

#[derive(Debug, PartialEq, Eq, thiserror::Error)]
pub enum MolError {
    #[error("bond endpoint {0} out of range")]
    BondOutOfRange(usize),
    #[error("bond endpoints must be distinct (atom {0})")]
    SelfBond(usize),
    #[error("duplicate bond between atoms {0} and {1}")]
    DuplicateBond(usize, usize),
    #[error("molecule is not connected")]
    Disconnected,
    #[error("formal charge {charge} on atom {atom} outside -1..=+1")]
    ChargeOutOfRange { atom: usize, charge: i8 },
    #[error("valence violation at atom {atom}: implicit_h {implicit_h} != effective valence {effective} - bond sum {bond_sum}")]
    Valence {
        atom: usize,
        implicit_h: u8,
        effective: i32,
        bond_sum: i32,
    },
    #[error("molecule has no atoms")]
    Empty,
}

/// A connected molecule. Immutable after construction; all invariants
/// (connectivity, charge range, the valence rule) are checked by [`MolGraph::new`].
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct MolGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adj: Vec<Vec<(usize, BondOrder)>>,
    ring_bond: Vec<bool>,
}

impl MolGraph {
    pub fn new(atoms: Vec<Atom>, mut bonds: Vec<Bond>) -> Result<Self, MolError> {
        if atoms.is_empty() {
            return Err(MolError::Empty);
        }
        let n = atoms.len();
        for b in &mut bonds {
            if b.a >= n {
                return Err(MolError::BondOutOfRange(b.a));
            }
            if b.b >= n {
                return Err(MolError::BondOutOfRange(b.b));
            }
            if b.a == b.b {
                return Err(MolError::SelfBond(b.a));
            }
            if b.a > b.b {
                std::mem::swap(&mut b.a, &mut b.b);
            }
        }
        bonds.sort_by_key(|b| (b.a, b.b));
        for w in bonds.windows(2) {
            if w[0].a == w[1].a && w[0].b == w[1].b {
                return Err(MolError::DuplicateBond(w[0].a, w[0].b));
            }
        }

        let mut adj = vec![Vec::new(); n];
        for b in &bonds {
            adj[b.a].push((b.b, b.order));
            adj[b.b].push((b.a, b.order));
        }
        for nb in &mut adj {
            nb.sort();
        }

        for (i, atom) in atoms.iter().enumerate() {
            if !(-1..=1).contains(&atom.formal_charge) {
                return Err(MolError::ChargeOutOfRange {
                    atom: i,
                    charge: atom.formal_charge,
                });
            }
            let bond_sum: i32 = adj[i].iter().map(|(_, o)| o.as_int()).sum();
            let effective = effective_valence(atom.element, atom.formal_charge);
            if i32::from(atom.implicit_h) != effective - bond_sum {
                return Err(MolError::Valence {
                    atom: i,
                    implicit_h: atom.implicit_h,
                    effective,
                    bond_sum,
                });
            }
        }

        let graph = MolGraph {
            ring_bond: vec![false; bonds.len()],
            atoms,
            bonds,
            adj,
        };
        if !graph.is_connected() {
            return Err(MolError::Disconnected);
        }
        Ok(MolGraph {
            ring_bond: graph.compute_ring_bonds(),
            ..graph
        })
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, BondOrder)] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn bond_between(&self, i: usize, j: usize) -> Option<BondOrder> {
        self.adj[i]
            .iter()
            .find(|(k, _)| *k == j)
            .map(|(_, o)| *o)
    }

    /// True when the bond between `i` and `j` lies on a cycle.
    pub fn bond_in_ring(&self, i: usize, j: usize) -> bool {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.bonds
            .iter()
            .position(|bd| bd.a == a && bd.b == b)
            .is_some_and(|idx| self.ring_bond[idx])
    }

    /// True when the atom lies on a cycle.
    pub fn atom_in_ring(&self, i: usize) -> bool {
        self.adj[i].iter().any(|&(j, _)| self.bond_in_ring(i, j))
    }

    pub fn total_charge(&self) -> i32 {
        self.atoms.iter().map(|a| i32::from(a.formal_charge)).sum()
    }

    /// (carbon count, oxygen count, total hydrogen count).
    pub fn formula(&self) -> (u32, u32, u32) {
        let mut c = 0;
        let mut o = 0;
        let mut h = 0;
        for a in &self.atoms {
            match a.element {
                Element::C => c += 1,
                Element::O => o += 1,
            }
            h += u32::from(a.implicit_h);
        }
        (c, o, h)
    }

    /// Rebuild the graph with atom `order[k]` becoming atom `k`.
    /// `order` must be a permutation of `0..atom_count()`.
    pub fn reordered(&self, order: &[usize]) -> MolGraph {
        assert_eq!(order.len(), self.atoms.len());
        let mut inverse = vec![usize::MAX; order.len()];
        for (new, &old) in order.iter().enumerate() {
            inverse[old] = new;
        }
        let atoms = order.iter().map(|&old| self.atoms[old]).collect();
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond {
                a: inverse[b.a],
                b: inverse[b.b],
                order: b.order,
            })
            .collect();
        MolGraph::new(atoms, bonds).expect("permuting a valid molecule preserves validity")
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.atoms.len()];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for &(j, _) in &self.adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == self.atoms.len()
    }

    /// A bond is a ring bond iff its endpoints stay connected without it.
    fn compute_ring_bonds(&self) -> Vec<bool> {
        let n = self.atoms.len();
        self.bonds
            .iter()
            .map(|bond| {
                let mut seen = vec![false; n];
                let mut stack = vec![bond.a];
                seen[bond.a] = true;
                while let Some(i) = stack.pop() {
                    if i == bond.b {
                        return true;
                    }
                    for &(j, _) in &self.adj[i] {
                        if (i, j) == (bond.a, bond.b) || (i, j) == (bond.b, bond.a) {
                            continue;
                        }
                        if !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
                false
            })
            .collect()
    }
}
