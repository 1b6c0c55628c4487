//! Network file format, version 1. UTF-8 text:
//!
//! ```text
//! RXNNET 1 <catalog-hash hex> <filter-descriptor>
//! M initial <ids>
//! M goal <id>             (absent when no goal is set)
//! M termination <cause>
//! M aux <ids>             (absent when no bath species exist)
//! S <id> <charge> <canonical-smiles>        (sorted by id)
//! R <id> <template-id> <site-key> | <reactant ids> | <aux-consumed ids> => <product ids> | <aux-produced ids>
//! CK <fnv1a of every prior byte, lowercase hex>
//! ```

use super::{NetworkError, Reaction, ReactionNetwork, Species, Termination};
use crate::fnv::fnv1a;
use crate::molgraph::{canonicalize, parse_smiles};
use std::fmt::Write as _;
use std::path::Path;

pub fn save(net: &ReactionNetwork, path: &Path) -> Result<(), NetworkError> {
    std::fs::write(path, render(net))?;
    Ok(())
}

fn render(net: &ReactionNetwork) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "RXNNET 1 {:016x} {}",
        net.catalog_hash, net.filter_desc
    );
    let ids = |ids: &[usize]| {
        ids.iter()
            .map(|id| id.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    if !net.initial_ids.is_empty() {
        let _ = writeln!(out, "M initial {}", ids(&net.initial_ids));
    }
    if let Some(goal) = net.goal_id {
        let _ = writeln!(out, "M goal {goal}");
    }
    let _ = writeln!(out, "M termination {}", net.termination.as_str());
    let aux: Vec<usize> = (0..net.species.len())
        .filter(|&id| net.species[id].auxiliary)
        .collect();
    if !aux.is_empty() {
        let _ = writeln!(out, "M aux {}", ids(&aux));
    }
    for (id, s) in net.species.iter().enumerate() {
        let _ = writeln!(out, "S {id} {} {}", s.charge, s.canonical);
    }
    for (id, r) in net.reactions.iter().enumerate() {
        let _ = writeln!(
            out,
            "R {id} {} {} | {} | {} => {} | {}",
            r.template_id,
            r.site_key,
            ids(&r.reactant_ids),
            ids(&r.aux_consumed),
            ids(&r.product_ids),
            ids(&r.aux_produced),
        );
    }
    let _ = writeln!(out, "CK {:016x}", fnv1a(out.as_bytes()));
    out
}

pub fn load(path: &Path) -> Result<ReactionNetwork, NetworkError> {
    let text = std::fs::read_to_string(path)?;
    parse(&text, &path.display().to_string())
}

fn parse(text: &str, path: &str) -> Result<ReactionNetwork, NetworkError> {
    let fail = |line: usize, reason: String| NetworkError::Format {
        path: path.to_string(),
        line,
        reason,
    };

    // The checksum covers every byte before its own line.
    let ck_start = text
        .lines()
        .last()
        .filter(|l| l.starts_with("CK "))
        .map(|l| text.len() - l.len() - 1)
        .ok_or_else(|| fail(text.lines().count(), "missing CK line".into()))?;
    let declared = text[ck_start..]
        .trim()
        .strip_prefix("CK ")
        .and_then(|h| u64::from_str_radix(h, 16).ok())
        .ok_or_else(|| fail(text.lines().count(), "malformed CK line".into()))?;
    let actual = fnv1a(text[..ck_start].as_bytes());
    if declared != actual {
        return Err(fail(
            text.lines().count(),
            format!("checksum mismatch: file says {declared:016x}, content is {actual:016x}"),
        ));
    }

    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| fail(1, "empty file".into()))?;
    let mut head = header.split_whitespace();
    if head.next() != Some("RXNNET") {
        return Err(fail(1, "not a RXNNET file".into()));
    }
    if head.next() != Some("1") {
        return Err(fail(1, "unsupported format version".into()));
    }
    let catalog_hash = head
        .next()
        .and_then(|h| u64::from_str_radix(h, 16).ok())
        .ok_or_else(|| fail(1, "bad catalog hash".into()))?;
    let filter_desc = head
        .next()
        .ok_or_else(|| fail(1, "missing filter descriptor".into()))?
        .to_string();

    let mut initial_ids = Vec::new();
    let mut goal_id = None;
    let mut termination = None;
    let mut aux_ids: Vec<usize> = Vec::new();
    let mut species: Vec<Species> = Vec::new();
    let mut reactions: Vec<Reaction> = Vec::new();

    let parse_ids = |field: &str, line: usize| -> Result<Vec<usize>, NetworkError> {
        field
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| fail(line, format!("bad id '{t}'"))))
            .collect()
    };

    for (idx, raw) in lines {
        let line_no = idx + 1;
        if raw.starts_with("CK ") {
            break;
        }
        let (kind, rest) = raw
            .split_once(' ')
            .ok_or_else(|| fail(line_no, "truncated line".into()))?;
        match kind {
            "M" => {
                let (key, value) = rest
                    .split_once(' ')
                    .ok_or_else(|| fail(line_no, "truncated meta line".into()))?;
                match key {
                    "initial" => initial_ids = parse_ids(value, line_no)?,
                    "goal" => {
                        goal_id = Some(
                            value
                                .trim()
                                .parse()
                                .map_err(|_| fail(line_no, "bad goal id".into()))?,
                        )
                    }
                    "termination" => {
                        termination = Some(match value.trim() {
                            "fixpoint" => Termination::Fixpoint,
                            "species-cap" => Termination::SpeciesCap,
                            other => {
                                return Err(fail(
                                    line_no,
                                    format!("unknown termination cause '{other}'"),
                                ))
                            }
                        })
                    }
                    "aux" => aux_ids = parse_ids(value, line_no)?,
                    other => return Err(fail(line_no, format!("unknown meta key '{other}'"))),
                }
            }
            "S" => {
                let mut f = rest.splitn(3, ' ');
                let id: usize = f
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| fail(line_no, "bad species id".into()))?;
                if id != species.len() {
                    return Err(fail(line_no, format!("species id {id} out of order")));
                }
                let charge: i32 = f
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| fail(line_no, "bad species charge".into()))?;
                let smiles = f
                    .next()
                    .ok_or_else(|| fail(line_no, "missing species smiles".into()))?;
                let mol = parse_smiles(smiles)
                    .map_err(|e| fail(line_no, format!("unparseable species: {e:?}")))?;
                let canonical = canonicalize(&mol);
                if canonical.as_str() != smiles {
                    return Err(fail(line_no, format!("species '{smiles}' is not canonical")));
                }
                if mol.total_charge() != charge {
                    return Err(fail(line_no, "charge column disagrees with structure".into()));
                }
                species.push(Species {
                    canonical,
                    formula: mol.formula(),
                    charge,
                    auxiliary: false, // patched from the aux meta line below
                });
            }
            "R" => {
                let mut f = rest.splitn(3, ' ');
                let id: usize = f
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| fail(line_no, "bad reaction id".into()))?;
                if id != reactions.len() {
                    return Err(fail(line_no, format!("reaction id {id} out of order")));
                }
                let template_id = f
                    .next()
                    .ok_or_else(|| fail(line_no, "missing template id".into()))?
                    .to_string();
                let tail = f.next().ok_or_else(|| fail(line_no, "truncated reaction".into()))?;
                let (site_key, tail) = tail
                    .split_once(" | ")
                    .ok_or_else(|| fail(line_no, "missing site key".into()))?;
                let (lhs, rhs) = tail
                    .split_once(" => ")
                    .ok_or_else(|| fail(line_no, "missing '=>'".into()))?;
                let (reactants, consumed) = lhs
                    .split_once(" | ")
                    .ok_or_else(|| fail(line_no, "missing reactant/aux split".into()))?;
                let (products, produced) = rhs
                    .split_once(" | ")
                    .ok_or_else(|| fail(line_no, "missing product/aux split".into()))?;
                reactions.push(Reaction {
                    template_id,
                    site_key: site_key.to_string(),
                    reactant_ids: parse_ids(reactants, line_no)?,
                    product_ids: parse_ids(products, line_no)?,
                    aux_consumed: parse_ids(consumed, line_no)?,
                    aux_produced: parse_ids(produced, line_no)?,
                });
            }
            other => return Err(fail(line_no, format!("unknown record '{other}'"))),
        }
    }

    let n = species.len();
    for &id in &aux_ids {
        if id >= n {
            return Err(fail(0, format!("aux id {id} out of range")));
        }
        species[id].auxiliary = true;
    }
    let check = |ids: &[usize]| ids.iter().all(|&id| id < n);
    if !check(&initial_ids)
        || !goal_id.is_none_or(|g| g < n)
        || !reactions.iter().all(|r| {
            check(&r.reactant_ids)
                && check(&r.product_ids)
                && check(&r.aux_consumed)
                && check(&r.aux_produced)
        })
    {
        return Err(fail(0, "id referenced beyond species table".into()));
    }

    Ok(ReactionNetwork {
        species,
        reactions,
        initial_ids,
        goal_id,
        catalog_hash,
        filter_desc,
        termination: termination.ok_or_else(|| fail(0, "missing termination meta".into()))?,
    })
}
