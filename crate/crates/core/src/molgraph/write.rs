//! SMILES writer. Output is a pure function of the atom-indexed graph:
//! traversal starts at atom 0 and always walks neighbors in ascending index
//! order, so reordering a graph by a canonical labeling and writing it yields
//! a canonical string.

use super::{Atom, BondOrder, MolGraph};
use std::fmt::Write;

pub fn write_smiles(mol: &MolGraph) -> String {
    Writer::new(mol, None).run()
}

/// Like [`write_smiles`], but atoms with a role are written as bracket atoms
/// carrying an atom-map suffix (`[CH2:0]`). Used for reaction-site keys;
/// role-tagged strings are not meant to be re-parsed.
pub fn write_smiles_with_roles(mol: &MolGraph, roles: &[Option<u8>]) -> String {
    Writer::new(mol, Some(roles)).run()
}

struct BackEdge {
    opener: usize,
    closer: usize,
    order: BondOrder,
    digit: u16,
}

struct Writer<'a> {
    mol: &'a MolGraph,
    roles: Option<&'a [Option<u8>]>,
    discovery: Vec<usize>,
    preorder: Vec<usize>,
    children: Vec<Vec<usize>>,
    back_edges: Vec<BackEdge>,
}

impl<'a> Writer<'a> {
    fn new(mol: &'a MolGraph, roles: Option<&'a [Option<u8>]>) -> Self {
        Writer {
            mol,
            roles,
            discovery: vec![usize::MAX; mol.atom_count()],
            preorder: Vec::with_capacity(mol.atom_count()),
            children: vec![Vec::new(); mol.atom_count()],
            back_edges: Vec::new(),
        }
    }

    fn run(mut self) -> String {
        self.classify(0, usize::MAX);
        self.assign_digits();
        let mut out = String::new();
        self.emit(0, &mut out);
        out
    }

    fn classify(&mut self, u: usize, parent: usize) {
        self.discovery[u] = self.preorder.len();
        self.preorder.push(u);
        for &(v, order) in self.mol.neighbors(u) {
            if v == parent {
                continue;
            }
            if self.discovery[v] == usize::MAX {
                self.children[u].push(v);
                self.classify(v, u);
            } else if self.discovery[v] < self.discovery[u] {
                // Cycle edge, recorded once at the later endpoint.
                self.back_edges.push(BackEdge {
                    opener: v,
                    closer: u,
                    order,
                    digit: 0,
                });
            }
        }
    }

    /// Assigns ring-closure digits by simulating emission order: a digit is
    /// freed for reuse once its closure has been written.
    fn assign_digits(&mut self) {
        let mut free: std::collections::BTreeSet<u16> = (1..100).collect();
        for &u in &self.preorder.clone() {
            for e in self.back_edges.iter() {
                if e.closer == u {
                    free.insert(e.digit);
                }
            }
            let mut opening: Vec<usize> = (0..self.back_edges.len())
                .filter(|&i| self.back_edges[i].opener == u)
                .collect();
            opening.sort_by_key(|&i| self.discovery[self.back_edges[i].closer]);
            for i in opening {
                let d = *free.iter().next().expect("ring closure digits exhausted");
                free.remove(&d);
                self.back_edges[i].digit = d;
            }
        }
    }

    fn emit(&self, u: usize, out: &mut String) {
        self.atom_token(u, out);

        let mut closing: Vec<&BackEdge> =
            self.back_edges.iter().filter(|e| e.closer == u).collect();
        closing.sort_by_key(|e| e.digit);
        for e in closing {
            Self::digit_token(e.digit, out);
        }

        let mut opening: Vec<&BackEdge> =
            self.back_edges.iter().filter(|e| e.opener == u).collect();
        opening.sort_by_key(|e| self.discovery[e.closer]);
        for e in opening {
            if e.order == BondOrder::Double {
                out.push('=');
            }
            Self::digit_token(e.digit, out);
        }

        for (k, &child) in self.children[u].iter().enumerate() {
            let last = k + 1 == self.children[u].len();
            if !last {
                out.push('(');
            }
            if self.mol.bond_between(u, child) == Some(BondOrder::Double) {
                out.push('=');
            }
            self.emit(child, out);
            if !last {
                out.push(')');
            }
        }
    }

    fn atom_token(&self, u: usize, out: &mut String) {
        let atom: &Atom = self.mol.atom(u);
        let role = self.roles.and_then(|r| r[u]);
        if atom.formal_charge == 0 && role.is_none() {
            out.push(atom.element.symbol());
            return;
        }
        out.push('[');
        out.push(atom.element.symbol());
        match atom.implicit_h {
            0 => {}
            1 => out.push('H'),
            h => write!(out, "H{h}").unwrap(),
        }
        match atom.formal_charge {
            1 => out.push('+'),
            -1 => out.push('-'),
            _ => {}
        }
        if let Some(r) = role {
            write!(out, ":{r}").unwrap();
        }
        out.push(']');
    }

    fn digit_token(digit: u16, out: &mut String) {
        if digit < 10 {
            write!(out, "{digit}").unwrap();
        } else {
            write!(out, "%{digit:02}").unwrap();
        }
    }
}
