//! Circular (Morgan-style) binary fingerprints.
//!
//! Each atom starts from a hash of its local attributes; every subsequent
//! round rehashes the atom together with the sorted identifiers of its
//! neighbors from the previous round, so an identifier at round r encodes the
//! atom's neighborhood out to distance r. Identifiers from all rounds 0..=r
//! set bits (identifier mod n_bits) in a fixed-width bit vector.

use super::MolGraph;
use crate::bits::BitVec;
use crate::fnv::Fnv64;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct FingerprintParams {
    /// Neighborhood radius; rounds 0..=radius all contribute bits.
    pub radius: u32,
    pub n_bits: usize,
}

impl Default for FingerprintParams {
    fn default() -> Self {
        FingerprintParams {
            radius: 2,
            n_bits: 1000,
        }
    }
}

pub type Fingerprint = BitVec;

pub fn morgan_fingerprint(mol: &MolGraph, params: FingerprintParams) -> Fingerprint {
    assert!(params.n_bits > 0, "fingerprint width must be positive");
    let n = mol.atom_count();
    let mut bits = BitVec::zeros(params.n_bits);

    // Round 0: local attributes only.
    let mut ids: Vec<u64> = (0..n)
        .map(|i| {
            let a = mol.atom(i);
            let mut h = Fnv64::new();
            h.write(&[
                a.element.symbol() as u8,
                (i32::from(a.formal_charge) + 1) as u8,
                a.implicit_h,
                mol.degree(i) as u8,
            ]);
            h.finish()
        })
        .collect();
    for &id in &ids {
        bits.set((id % params.n_bits as u64) as usize);
    }

    for _round in 1..=params.radius {
        let next: Vec<u64> = (0..n)
            .map(|i| {
                let mut nbr: Vec<(u8, u64)> = mol
                    .neighbors(i)
                    .iter()
                    .map(|&(j, o)| (o.as_int() as u8, ids[j]))
                    .collect();
                nbr.sort_unstable();
                let mut h = Fnv64::new();
                h.write_u64(ids[i]);
                for (order, id) in nbr {
                    h.write(&[order]);
                    h.write_u64(id);
                }
                h.finish()
            })
            .collect();
        for &id in &next {
            bits.set((id % params.n_bits as u64) as usize);
        }
        ids = next;
    }

    bits
}
