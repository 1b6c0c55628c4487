//! Fixed-width bit vectors backed by `u64` words.
//!
//! Fingerprints and observation encodings are dense bit sets of a few
//! hundred to a few thousand bits; the operations that matter are OR-folding,
//! iterating set bits, and dot products against weight vectors.

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct BitVec {
    len: usize,
    words: Vec<u64>,
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        BitVec {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.words[i / 64] |= 1u64 << (i % 64);
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.words[i / 64] & (1u64 << (i % 64)) != 0
    }

    pub fn or_assign(&mut self, other: &BitVec) {
        assert_eq!(self.len, other.len, "length mismatch in bitwise or");
        for (w, o) in self.words.iter_mut().zip(&other.words) {
            *w |= o;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Indices of set bits, ascending.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let tz = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(wi * 64 + tz)
            })
        })
    }

    /// Sum of `weights[i]` over set bits `i`.
    pub fn dot(&self, weights: &[f64]) -> f64 {
        debug_assert_eq!(weights.len(), self.len);
        let mut acc = 0.0;
        for i in self.iter_ones() {
            acc += weights[i];
        }
        acc
    }

    /// Lowercase hex of the word representation, most significant word last.
    /// Stable encoding used by pinned test fixtures.
    pub fn to_hex(&self) -> String {
        use std::fmt::Write;
        let mut s = String::with_capacity(self.words.len() * 16);
        for w in &self.words {
            write!(s, "{w:016x}").unwrap();
        }
        s
    }

    pub fn from_hex(len: usize, hex: &str) -> Option<Self> {
        let n_words = len.div_ceil(64);
        if hex.len() != n_words * 16 {
            return None;
        }
        let mut words = Vec::with_capacity(n_words);
        for chunk in hex.as_bytes().chunks(16) {
            let s = std::str::from_utf8(chunk).ok()?;
            words.push(u64::from_str_radix(s, 16).ok()?);
        }
        Some(BitVec { len, words })
    }
}
