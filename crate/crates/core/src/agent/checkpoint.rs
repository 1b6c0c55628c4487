//! Versioned binary parameter files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic   8 bytes  "RLPOLICY"
//! version u32      1
//! shapes  4 x u32  n_bits, d_in, h, head_hidden
//! len     u64      flattened parameter count
//! data    len x f64
//! check   u64      FNV-1a of every preceding byte
//! ```

use crate::fnv::fnv1a;
use std::fs;
use std::path::Path;

use super::nn::{PolicyParams, Shapes};
use super::AgentError;

const MAGIC: &[u8; 8] = b"RLPOLICY";
const VERSION: u32 = 1;

pub fn save_params(params: &PolicyParams, path: &Path) -> Result<(), AgentError> {
    let flat = params.to_flat();
    let sh = params.shapes;
    let mut out = Vec::with_capacity(8 + 4 + 16 + 8 + flat.len() * 8 + 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for dim in [sh.n_bits, sh.d_in, sh.h, sh.head_hidden] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    out.extend_from_slice(&(flat.len() as u64).to_le_bytes());
    for v in &flat {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let check = fnv1a(&out);
    out.extend_from_slice(&check.to_le_bytes());
    fs::write(path, out)?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<PolicyParams, AgentError> {
    let bytes = fs::read(path)?;
    let fail = |msg: &str| AgentError::Checkpoint(format!("{}: {msg}", path.display()));
    if bytes.len() < 8 + 4 + 16 + 8 + 8 {
        return Err(fail("truncated header"));
    }
    let (body, check_bytes) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(check_bytes.try_into().expect("eight bytes"));
    if fnv1a(body) != stored {
        return Err(fail("checksum mismatch"));
    }
    if &body[0..8] != MAGIC {
        return Err(fail("bad magic"));
    }
    let u32_at = |at: usize| u32::from_le_bytes(body[at..at + 4].try_into().expect("four bytes"));
    if u32_at(8) != VERSION {
        return Err(fail("unsupported version"));
    }
    let shapes = Shapes {
        n_bits: u32_at(12) as usize,
        d_in: u32_at(16) as usize,
        h: u32_at(20) as usize,
        head_hidden: u32_at(24) as usize,
    };
    let len = u64::from_le_bytes(body[28..36].try_into().expect("eight bytes")) as usize;
    if len != shapes.flat_len() {
        return Err(fail("length does not match shapes"));
    }
    if body.len() != 36 + len * 8 {
        return Err(fail("truncated data"));
    }
    let flat: Vec<f64> = body[36..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
        .collect();
    PolicyParams::from_flat(shapes, &flat)
}
