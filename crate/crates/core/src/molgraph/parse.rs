//! Parser for the SMILES subset used throughout the crate.
//!
//! Grammar (documented in full in `docs/smiles-subset.md`):
//! bare atoms `C`/`O`, bracket atoms `[C+]`, `[OH3+]`, `[O-]` with explicit
//! hydrogen counts and a formal charge of magnitude at most one, branches in
//! parentheses, bond symbols `-` and `=`, ring closures `0`-`9` and `%nn`.
//! Aromatic atoms, stereo markers, isotopes, other elements, and
//! multi-molecule dots are rejected as unsupported features.

use super::{effective_valence, Atom, Bond, BondOrder, Element, MolError, MolGraph};
use std::collections::HashMap;

#[derive(Debug, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at byte {position}: {reason}")]
    Syntax { position: usize, reason: String },
    #[error("valence violation at atom {atom}")]
    Valence { atom: usize },
    #[error("unmatched ring closure {digit}")]
    UnmatchedRingClosure { digit: u16 },
    #[error("unsupported feature at byte {position}: {feature}")]
    Unsupported { position: usize, feature: String },
}

fn syntax(position: usize, reason: &str) -> ParseError {
    ParseError::Syntax {
        position,
        reason: reason.to_string(),
    }
}

fn unsupported(position: usize, feature: &str) -> ParseError {
    ParseError::Unsupported {
        position,
        feature: feature.to_string(),
    }
}

/// Atom under construction; hydrogen count is resolved once all bonds are known.
struct PendingAtom {
    element: Element,
    charge: i8,
    // `Some` for bracket atoms (explicit count), `None` for bare atoms.
    explicit_h: Option<u8>,
}

pub fn parse_smiles(input: &str) -> Result<MolGraph, ParseError> {
    let bytes = input.as_bytes();
    if bytes.is_empty() {
        return Err(syntax(0, "empty input"));
    }

    let mut atoms: Vec<PendingAtom> = Vec::new();
    let mut bonds: Vec<Bond> = Vec::new();
    let mut branch_stack: Vec<usize> = Vec::new();
    let mut ring_open: HashMap<u16, (usize, Option<BondOrder>)> = HashMap::new();
    let mut prev: Option<usize> = None;
    let mut pending_bond: Option<BondOrder> = None;
    let mut pos = 0;

    let push_atom = |atoms: &mut Vec<PendingAtom>,
                         bonds: &mut Vec<Bond>,
                         prev: &mut Option<usize>,
                         pending: &mut Option<BondOrder>,
                         atom: PendingAtom| {
        let idx = atoms.len();
        atoms.push(atom);
        if let Some(p) = *prev {
            bonds.push(Bond {
                a: p,
                b: idx,
                order: pending.take().unwrap_or(BondOrder::Single),
            });
        }
        *prev = Some(idx);
    };

    while pos < bytes.len() {
        let c = bytes[pos];
        match c {
            b'C' => {
                push_atom(
                    &mut atoms,
                    &mut bonds,
                    &mut prev,
                    &mut pending_bond,
                    PendingAtom {
                        element: Element::C,
                        charge: 0,
                        explicit_h: None,
                    },
                );
                pos += 1;
            }
            b'O' => {
                push_atom(
                    &mut atoms,
                    &mut bonds,
                    &mut prev,
                    &mut pending_bond,
                    PendingAtom {
                        element: Element::O,
                        charge: 0,
                        explicit_h: None,
                    },
                );
                pos += 1;
            }
            b'[' => {
                let (atom, next) = parse_bracket(bytes, pos)?;
                push_atom(&mut atoms, &mut bonds, &mut prev, &mut pending_bond, atom);
                pos = next;
            }
            b'-' | b'=' => {
                if pending_bond.is_some() {
                    return Err(syntax(pos, "two bond symbols in a row"));
                }
                pending_bond = Some(if c == b'-' {
                    BondOrder::Single
                } else {
                    BondOrder::Double
                });
                pos += 1;
            }
            b'(' => {
                let p = prev.ok_or_else(|| syntax(pos, "branch before any atom"))?;
                if pending_bond.is_some() {
                    return Err(syntax(pos, "bond symbol before branch open"));
                }
                branch_stack.push(p);
                pos += 1;
            }
            b')' => {
                if pending_bond.is_some() {
                    return Err(syntax(pos, "dangling bond before branch close"));
                }
                prev = Some(
                    branch_stack
                        .pop()
                        .ok_or_else(|| syntax(pos, "unbalanced branch close"))?,
                );
                pos += 1;
            }
            b'0'..=b'9' | b'%' => {
                let (digit, next) = if c == b'%' {
                    if pos + 2 >= bytes.len()
                        || !bytes[pos + 1].is_ascii_digit()
                        || !bytes[pos + 2].is_ascii_digit()
                    {
                        return Err(syntax(pos, "%% ring closure needs two digits"));
                    }
                    let d = u16::from(bytes[pos + 1] - b'0') * 10 + u16::from(bytes[pos + 2] - b'0');
                    (d, pos + 3)
                } else {
                    (u16::from(c - b'0'), pos + 1)
                };
                let here = prev.ok_or_else(|| syntax(pos, "ring closure before any atom"))?;
                match ring_open.remove(&digit) {
                    None => {
                        ring_open.insert(digit, (here, pending_bond.take()));
                    }
                    Some((other, open_order)) => {
                        let order = match (open_order, pending_bond.take()) {
                            (Some(a), Some(b)) if a != b => {
                                return Err(syntax(pos, "ring closure bond order mismatch"))
                            }
                            (a, b) => a.or(b).unwrap_or(BondOrder::Single),
                        };
                        if other == here {
                            return Err(syntax(pos, "ring closure to the same atom"));
                        }
                        bonds.push(Bond {
                            a: other,
                            b: here,
                            order,
                        });
                    }
                }
                pos = next;
            }
            b'.' => return Err(unsupported(pos, "multi-molecule input")),
            b'#' => return Err(unsupported(pos, "triple bond")),
            b'/' | b'\\' | b'@' => return Err(unsupported(pos, "stereochemistry")),
            b':' => return Err(unsupported(pos, "aromatic bond or atom map")),
            b'*' => return Err(unsupported(pos, "wildcard atom")),
            b'c' | b'o' | b'n' | b's' | b'p' | b'b' => {
                return Err(unsupported(pos, "aromatic atom"))
            }
            b'A'..=b'Z' => {
                return Err(unsupported(pos, "element outside the C/O subset"))
            }
            _ => return Err(syntax(pos, "unexpected character")),
        }
    }

    if pending_bond.is_some() {
        return Err(syntax(bytes.len(), "dangling bond at end of input"));
    }
    if !branch_stack.is_empty() {
        return Err(syntax(bytes.len(), "unclosed branch"));
    }
    if let Some(&digit) = ring_open.keys().min() {
        return Err(ParseError::UnmatchedRingClosure { digit });
    }

    // Resolve implicit hydrogens and validate valences.
    let mut bond_sum = vec![0i32; atoms.len()];
    for b in &bonds {
        bond_sum[b.a] += b.order.as_int();
        bond_sum[b.b] += b.order.as_int();
    }
    let resolved: Vec<Atom> = atoms
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let effective = effective_valence(a.element, a.charge);
            let h = match a.explicit_h {
                Some(h) => h,
                None => u8::try_from(effective - bond_sum[i])
                    .map_err(|_| ParseError::Valence { atom: i })?,
            };
            if i32::from(h) != effective - bond_sum[i] {
                return Err(ParseError::Valence { atom: i });
            }
            Ok(Atom {
                element: a.element,
                formal_charge: a.charge,
                implicit_h: h,
            })
        })
        .collect::<Result<_, _>>()?;

    MolGraph::new(resolved, bonds).map_err(|e| match e {
        MolError::Valence { atom, .. } => ParseError::Valence { atom },
        MolError::DuplicateBond(a, b) => syntax(0, &format!("duplicate bond between atoms {a} and {b}")),
        other => syntax(0, &format!("invalid molecule: {other}")),
    })
}

/// Parses `[...]` starting at `open`; returns the atom and the byte offset
/// just past the closing bracket.
fn parse_bracket(bytes: &[u8], open: usize) -> Result<(PendingAtom, usize), ParseError> {
    let mut pos = open + 1;
    let peek = |p: usize| bytes.get(p).copied();

    if peek(pos).is_some_and(|c| c.is_ascii_digit()) {
        return Err(unsupported(pos, "isotope"));
    }
    let element = match peek(pos) {
        Some(b'C') => Element::C,
        Some(b'O') => Element::O,
        Some(c) if c.is_ascii_lowercase() => return Err(unsupported(pos, "aromatic atom")),
        Some(c) if c.is_ascii_uppercase() && c != b'H' => {
            return Err(unsupported(pos, "element outside the C/O subset"))
        }
        _ => return Err(syntax(pos, "expected element in bracket atom")),
    };
    pos += 1;

    let mut explicit_h: u8 = 0;
    if peek(pos) == Some(b'H') {
        pos += 1;
        let mut count = 1u16;
        if peek(pos).is_some_and(|c| c.is_ascii_digit()) {
            count = u16::from(bytes[pos] - b'0');
            pos += 1;
            // A second digit would exceed any legal valence here.
            if peek(pos).is_some_and(|c| c.is_ascii_digit()) {
                return Err(syntax(pos, "hydrogen count too large"));
            }
        }
        explicit_h = count as u8;
    }

    let mut charge: i8 = 0;
    match peek(pos) {
        Some(b'+') | Some(b'-') => {
            let sign: i8 = if bytes[pos] == b'+' { 1 } else { -1 };
            pos += 1;
            let mut magnitude = 1i8;
            if peek(pos).is_some_and(|c| c.is_ascii_digit()) {
                magnitude = (bytes[pos] - b'0') as i8;
                pos += 1;
            } else if peek(pos) == Some(bytes[pos - 1]) {
                return Err(unsupported(pos, "charge magnitude above one"));
            }
            if magnitude > 1 {
                return Err(unsupported(pos - 1, "charge magnitude above one"));
            }
            charge = sign * magnitude;
        }
        _ => {}
    }

    match peek(pos) {
        Some(b']') => Ok((
            PendingAtom {
                element,
                charge,
                explicit_h: Some(explicit_h),
            },
            pos + 1,
        )),
        Some(b'@') => Err(unsupported(pos, "stereochemistry")),
        Some(b':') => Err(unsupported(pos, "atom map")),
        _ => Err(syntax(pos, "expected ] to close bracket atom")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn water_and_hydronium() {
        let w = parse_smiles("O").unwrap();
        assert_eq!(w.atom(0).implicit_h, 2);
        assert_eq!(w.atom(0).formal_charge, 0);

        let h = parse_smiles("[OH3+]").unwrap();
        assert_eq!(h.atom(0).implicit_h, 3);
        assert_eq!(h.atom(0).formal_charge, 1);

        let hydroxide = parse_smiles("[OH-]").unwrap();
        assert_eq!(hydroxide.atom(0).implicit_h, 1);
        assert_eq!(hydroxide.atom(0).formal_charge, -1);
    }

    #[test]
    fn fructose_open_chain() {
        let f = parse_smiles("OCC(=O)C(O)C(O)C(O)CO").unwrap();
        assert_eq!(f.formula(), (6, 6, 12));
        assert_eq!(f.total_charge(), 0);
    }

    #[test]
    fn ring_closures() {
        let thf = parse_smiles("C1CCCO1").unwrap();
        assert_eq!(thf.atom_count(), 5);
        assert!(thf.bond_in_ring(0, 4));
        // Percent form parses to the same molecule shape.
        let thf2 = parse_smiles("C%12CCCO%12").unwrap();
        assert_eq!(thf2.atom_count(), 5);
    }

    #[test]
    fn double_bond_on_ring_closure() {
        let a = parse_smiles("C=1CCC=1").unwrap();
        assert_eq!(a.bond_between(0, 3), Some(BondOrder::Double));
        assert!(matches!(
            parse_smiles("C=1CCC-1"),
            Err(ParseError::Syntax { .. })
        ));
    }

    #[test]
    fn branch_handling() {
        let m = parse_smiles("CC(=O)O").unwrap();
        assert_eq!(m.bond_between(1, 2), Some(BondOrder::Double));
        assert_eq!(m.bond_between(1, 3), Some(BondOrder::Single));
        assert!(matches!(
            parse_smiles("CC(=O"),
            Err(ParseError::Syntax { .. })
        ));
    }

    #[test]
    fn valence_violations() {
        assert_eq!(parse_smiles("O(C)(C)C"), Err(ParseError::Valence { atom: 0 }));
        assert_eq!(parse_smiles("[OH3]"), Err(ParseError::Valence { atom: 0 }));
        assert_eq!(parse_smiles("[CH4+]"), Err(ParseError::Valence { atom: 0 }));
    }

    #[test]
    fn unmatched_ring() {
        assert_eq!(
            parse_smiles("C1CC"),
            Err(ParseError::UnmatchedRingClosure { digit: 1 })
        );
    }

    #[test]
    fn unsupported_features() {
        for (input, needle) in [
            ("c1ccccc1", "aromatic"),
            ("CN", "element"),
            ("C#C", "triple"),
            ("C/C=C/C", "stereo"),
            ("[13C]", "isotope"),
            ("CC.O", "multi-molecule"),
            ("[O-2]", "charge"),
        ] {
            match parse_smiles(input) {
                Err(ParseError::Unsupported { feature, .. }) => {
                    assert!(
                        feature.contains(needle),
                        "{input}: feature {feature} should mention {needle}"
                    );
                }
                other => panic!("{input}: expected unsupported, got {other:?}"),
            }
        }
    }

    #[test]
    fn syntax_positions_reported() {
        match parse_smiles("C)C") {
            Err(ParseError::Syntax { position, .. }) => assert_eq!(position, 1),
            other => panic!("expected syntax error, got {other:?}"),
        }
        match parse_smiles("C=(C)") {
            Err(ParseError::Syntax { position, .. }) => assert_eq!(position, 2),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }
}
