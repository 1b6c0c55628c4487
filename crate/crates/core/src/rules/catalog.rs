//! Rule catalog text format.
//!
//! A catalog is UTF-8 text, one template per record:
//!
//! ```text
//! template <id> "<name>"
//!   approximate                 # optional: deliberately coarse chemistry
//!   atom <idx> [elem=C|O] [charge=<q>] [h=<n>] [h>=<n>] [o>=<n>] [o<=<n>]
//!             [sat=yes|no] [ring=yes|no]
//!   bond <i> <j> order=<1|2> [ring=yes|no]
//!   edit add_bond <i> <j> <order>
//!   edit remove_bond <i> <j>
//!   edit set_bond <i> <j> <order>
//!   edit set_charge <i> <q>
//!   edit add_h <i> <delta>
//!   edit attach <i> elem=<C|O> charge=<q> h=<n> order=<1|2>
//!   consume <smiles>            # bath species required per application
//!   produce <smiles>            # bath species released per application
//!   reverse <id>                # template undoing this one, if any
//! end
//! ```
//!
//! `#` starts a comment; blank lines are ignored. Atom indices must be
//! contiguous from 0, the pattern connected with at most 8 atoms, and
//! declared reverse pairs mutual. The shipped default catalog covers
//! protonation/deprotonation, dehydration/hydration, hydride shift, ring
//! opening/closure (5- and 6-membered), alkyl-shift ring reshaping,
//! keto-enol exchange, carbonyl hydration, and formic-acid cleavage.

use super::{AtomConstraint, BondConstraint, Edit, Pattern, ReactionTemplate};
use crate::fnv::fnv1a;
use crate::molgraph::{canonicalize, parse_smiles, BondOrder, CanonicalForm, Element};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum CatalogError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("template {id}: {reason}")]
    Template { id: String, reason: String },
}

#[derive(Clone, Debug)]
pub struct Catalog {
    /// Sorted by id; index order is the canonical template order.
    templates: Vec<ReactionTemplate>,
}

static DEFAULT: OnceLock<Catalog> = OnceLock::new();

/// The catalog shipped with the crate (also present in the repo at
/// `crates/core/data/rules_default.cat`).
pub fn default_catalog() -> &'static Catalog {
    DEFAULT.get_or_init(|| {
        Catalog::parse(include_str!("../../data/rules_default.cat"))
            .expect("shipped catalog is valid")
    })
}

impl Catalog {
    pub fn templates(&self) -> &[ReactionTemplate] {
        &self.templates
    }

    pub fn get(&self, id: &str) -> Option<(usize, &ReactionTemplate)> {
        self.templates
            .binary_search_by(|t| t.id.as_str().cmp(id))
            .ok()
            .map(|i| (i, &self.templates[i]))
    }

    /// Templates whose id starts with one of the given letters (a template
    /// id's first character names the chemistry family). Reverse
    /// declarations pointing outside the subset are cleared.
    pub fn subset(&self, letters: &str) -> Catalog {
        let mut templates: Vec<ReactionTemplate> = self
            .templates
            .iter()
            .filter(|t| t.id.starts_with(|c| letters.contains(c)))
            .cloned()
            .collect();
        let kept: Vec<String> = templates.iter().map(|t| t.id.clone()).collect();
        for t in &mut templates {
            if let Some(r) = &t.reverse {
                if !kept.contains(r) {
                    t.reverse = None;
                }
            }
        }
        Catalog { templates }
    }

    /// FNV-1a over the canonical serialization; identifies the chemistry a
    /// network was generated with.
    pub fn content_hash(&self) -> u64 {
        fnv1a(self.to_text().as_bytes())
    }

    /// Canonical forms of everything any template consumes or produces:
    /// the proton/water bath this chemistry runs in. Sorted, deduplicated.
    pub fn bath_forms(&self) -> Vec<CanonicalForm> {
        let mut out: Vec<CanonicalForm> = self
            .templates
            .iter()
            .flat_map(|t| t.consumes.iter().chain(&t.produces))
            .map(|(_, c)| c.clone())
            .collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn parse(text: &str) -> Result<Catalog, CatalogError> {
        let mut templates: Vec<ReactionTemplate> = Vec::new();
        let mut current: Option<TemplateBuilder> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| CatalogError::Syntax {
                line: line_no,
                reason,
            };
            if let Some(rest) = line.strip_prefix("template ") {
                if current.is_some() {
                    return Err(err("template record opened inside another".into()));
                }
                current = Some(TemplateBuilder::open(rest).map_err(err)?);
            } else if line == "end" {
                let b = current
                    .take()
                    .ok_or_else(|| err("'end' outside a template record".into()))?;
                templates.push(b.finish()?);
            } else {
                let b = current
                    .as_mut()
                    .ok_or_else(|| err(format!("'{line}' outside a template record")))?;
                b.line(line).map_err(err)?;
            }
        }
        if let Some(b) = current {
            return Err(CatalogError::Template {
                id: b.id,
                reason: "missing 'end'".into(),
            });
        }

        templates.sort_by(|a, b| a.id.cmp(&b.id));
        for w in templates.windows(2) {
            if w[0].id == w[1].id {
                return Err(CatalogError::Template {
                    id: w[0].id.clone(),
                    reason: "duplicate id".into(),
                });
            }
        }
        let ids: BTreeMap<&str, &ReactionTemplate> =
            templates.iter().map(|t| (t.id.as_str(), t)).collect();
        for t in &templates {
            if let Some(r) = &t.reverse {
                let partner = ids.get(r.as_str()).ok_or_else(|| CatalogError::Template {
                    id: t.id.clone(),
                    reason: format!("reverse '{r}' not in catalog"),
                })?;
                if partner.reverse.as_deref() != Some(t.id.as_str()) {
                    return Err(CatalogError::Template {
                        id: t.id.clone(),
                        reason: format!("reverse '{r}' does not point back"),
                    });
                }
            }
        }
        Ok(Catalog { templates })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.templates {
            let _ = writeln!(out, "template {} \"{}\"", t.id, t.name);
            if t.approximate {
                out.push_str("  approximate\n");
            }
            for (i, a) in t.pattern.atoms.iter().enumerate() {
                let _ = write!(out, "  atom {i}");
                if let Some(e) = a.element {
                    let _ = write!(out, " elem={}", e.symbol());
                }
                if let Some(q) = a.charge {
                    let _ = write!(out, " charge={q}");
                }
                if let Some(h) = a.exact_h {
                    let _ = write!(out, " h={h}");
                }
                if let Some(h) = a.min_h {
                    let _ = write!(out, " h>={h}");
                }
                if let Some(n) = a.min_o_neighbors {
                    let _ = write!(out, " o>={n}");
                }
                if let Some(n) = a.max_o_neighbors {
                    let _ = write!(out, " o<={n}");
                }
                if let Some(s) = a.saturated {
                    let _ = write!(out, " sat={}", if s { "yes" } else { "no" });
                }
                if let Some(r) = a.in_ring {
                    let _ = write!(out, " ring={}", if r { "yes" } else { "no" });
                }
                out.push('\n');
            }
            for b in &t.pattern.bonds {
                let _ = write!(out, "  bond {} {} order={}", b.a, b.b, b.order.as_int());
                if let Some(r) = b.in_ring {
                    let _ = write!(out, " ring={}", if r { "yes" } else { "no" });
                }
                out.push('\n');
            }
            for e in &t.edits {
                match *e {
                    Edit::AddBond(i, j, o) => {
                        let _ = writeln!(out, "  edit add_bond {i} {j} {}", o.as_int());
                    }
                    Edit::RemoveBond(i, j) => {
                        let _ = writeln!(out, "  edit remove_bond {i} {j}");
                    }
                    Edit::SetBond(i, j, o) => {
                        let _ = writeln!(out, "  edit set_bond {i} {j} {}", o.as_int());
                    }
                    Edit::SetCharge(i, q) => {
                        let _ = writeln!(out, "  edit set_charge {i} {q}");
                    }
                    Edit::AddH(i, d) => {
                        let _ = writeln!(out, "  edit add_h {i} {d:+}");
                    }
                    Edit::Attach {
                        to,
                        element,
                        charge,
                        h,
                        order,
                    } => {
                        let _ = writeln!(
                            out,
                            "  edit attach {to} elem={} charge={charge} h={h} order={}",
                            element.symbol(),
                            order.as_int()
                        );
                    }
                }
            }
            for (_, c) in &t.consumes {
                let _ = writeln!(out, "  consume {c}");
            }
            for (_, c) in &t.produces {
                let _ = writeln!(out, "  produce {c}");
            }
            if let Some(r) = &t.reverse {
                let _ = writeln!(out, "  reverse {r}");
            }
            out.push_str("end\n");
        }
        out
    }
}

struct TemplateBuilder {
    id: String,
    name: String,
    atoms: Vec<AtomConstraint>,
    bonds: Vec<BondConstraint>,
    edits: Vec<Edit>,
    consumes: Vec<String>,
    produces: Vec<String>,
    reverse: Option<String>,
    approximate: bool,
}

impl TemplateBuilder {
    fn open(rest: &str) -> Result<TemplateBuilder, String> {
        let rest = rest.trim();
        let (id, name) = match rest.split_once(' ') {
            Some((id, name)) => {
                let name = name.trim();
                let name = name
                    .strip_prefix('"')
                    .and_then(|n| n.strip_suffix('"'))
                    .ok_or_else(|| format!("template name must be quoted: {name}"))?;
                (id, name.to_string())
            }
            None => (rest, String::new()),
        };
        if id.is_empty() {
            return Err("template id missing".into());
        }
        Ok(TemplateBuilder {
            id: id.to_string(),
            name,
            atoms: Vec::new(),
            bonds: Vec::new(),
            edits: Vec::new(),
            consumes: Vec::new(),
            produces: Vec::new(),
            reverse: None,
            approximate: false,
        })
    }

    fn line(&mut self, line: &str) -> Result<(), String> {
        let mut tokens = line.split_whitespace();
        let head = tokens.next().unwrap();
        let rest: Vec<&str> = tokens.collect();
        match head {
            "approximate" => {
                self.approximate = true;
                Ok(())
            }
            "atom" => self.atom_line(&rest),
            "bond" => self.bond_line(&rest),
            "edit" => self.edit_line(&rest),
            "consume" => {
                self.consumes.push(expect_one(&rest, "consume")?.to_string());
                Ok(())
            }
            "produce" => {
                self.produces.push(expect_one(&rest, "produce")?.to_string());
                Ok(())
            }
            "reverse" => {
                self.reverse = Some(expect_one(&rest, "reverse")?.to_string());
                Ok(())
            }
            other => Err(format!("unknown directive '{other}'")),
        }
    }

    fn atom_line(&mut self, rest: &[&str]) -> Result<(), String> {
        let idx: usize = rest
            .first()
            .ok_or("atom index missing")?
            .parse()
            .map_err(|_| "atom index not a number".to_string())?;
        if idx != self.atoms.len() {
            return Err(format!("atom indices must be contiguous, expected {}", self.atoms.len()));
        }
        let mut c = AtomConstraint::default();
        for tok in &rest[1..] {
            if let Some(v) = tok.strip_prefix("h>=") {
                c.min_h = Some(v.parse().map_err(|_| format!("bad h>= value '{v}'"))?);
            } else if let Some(v) = tok.strip_prefix("o>=") {
                c.min_o_neighbors =
                    Some(v.parse().map_err(|_| format!("bad o>= value '{v}'"))?);
            } else if let Some(v) = tok.strip_prefix("o<=") {
                c.max_o_neighbors =
                    Some(v.parse().map_err(|_| format!("bad o<= value '{v}'"))?);
            } else if let Some(v) = tok.strip_prefix("sat=") {
                c.saturated = Some(parse_yes_no(v)?);
            } else if let Some(v) = tok.strip_prefix("elem=") {
                c.element = Some(parse_element(v)?);
            } else if let Some(v) = tok.strip_prefix("charge=") {
                c.charge = Some(parse_charge(v)?);
            } else if let Some(v) = tok.strip_prefix("h=") {
                c.exact_h = Some(v.parse().map_err(|_| format!("bad h value '{v}'"))?);
            } else if let Some(v) = tok.strip_prefix("ring=") {
                c.in_ring = Some(parse_yes_no(v)?);
            } else {
                return Err(format!("unknown atom field '{tok}'"));
            }
        }
        self.atoms.push(c);
        Ok(())
    }

    fn bond_line(&mut self, rest: &[&str]) -> Result<(), String> {
        if rest.len() < 3 {
            return Err("bond needs: <i> <j> order=<1|2>".into());
        }
        let a: usize = rest[0].parse().map_err(|_| "bad bond endpoint".to_string())?;
        let b: usize = rest[1].parse().map_err(|_| "bad bond endpoint".to_string())?;
        let mut order = None;
        let mut in_ring = None;
        for tok in &rest[2..] {
            if let Some(v) = tok.strip_prefix("order=") {
                order = Some(parse_order(v)?);
            } else if let Some(v) = tok.strip_prefix("ring=") {
                in_ring = Some(parse_yes_no(v)?);
            } else {
                return Err(format!("unknown bond field '{tok}'"));
            }
        }
        self.bonds.push(BondConstraint {
            a,
            b,
            order: order.ok_or("bond order missing")?,
            in_ring,
        });
        Ok(())
    }

    fn edit_line(&mut self, rest: &[&str]) -> Result<(), String> {
        let op = *rest.first().ok_or("edit op missing")?;
        let args = &rest[1..];
        let idx = |s: &str| -> Result<usize, String> {
            s.parse().map_err(|_| format!("bad atom index '{s}'"))
        };
        let edit = match op {
            "add_bond" => {
                let [i, j, o] = args else {
                    return Err("add_bond needs: <i> <j> <order>".into());
                };
                Edit::AddBond(idx(i)?, idx(j)?, parse_order(o)?)
            }
            "remove_bond" => {
                let [i, j] = args else {
                    return Err("remove_bond needs: <i> <j>".into());
                };
                Edit::RemoveBond(idx(i)?, idx(j)?)
            }
            "set_bond" => {
                let [i, j, o] = args else {
                    return Err("set_bond needs: <i> <j> <order>".into());
                };
                Edit::SetBond(idx(i)?, idx(j)?, parse_order(o)?)
            }
            "set_charge" => {
                let [i, q] = args else {
                    return Err("set_charge needs: <i> <q>".into());
                };
                Edit::SetCharge(idx(i)?, parse_charge(q)?)
            }
            "add_h" => {
                let [i, d] = args else {
                    return Err("add_h needs: <i> <delta>".into());
                };
                Edit::AddH(
                    idx(i)?,
                    d.parse().map_err(|_| format!("bad h delta '{d}'"))?,
                )
            }
            "attach" => {
                let to = idx(args.first().ok_or("attach needs an anchor atom")?)?;
                let mut element = None;
                let mut charge = 0i8;
                let mut h = 0u8;
                let mut order = BondOrder::Single;
                for tok in &args[1..] {
                    if let Some(v) = tok.strip_prefix("elem=") {
                        element = Some(parse_element(v)?);
                    } else if let Some(v) = tok.strip_prefix("charge=") {
                        charge = parse_charge(v)?;
                    } else if let Some(v) = tok.strip_prefix("h=") {
                        h = v.parse().map_err(|_| format!("bad h value '{v}'"))?;
                    } else if let Some(v) = tok.strip_prefix("order=") {
                        order = parse_order(v)?;
                    } else {
                        return Err(format!("unknown attach field '{tok}'"));
                    }
                }
                Edit::Attach {
                    to,
                    element: element.ok_or("attach needs elem=")?,
                    charge,
                    h,
                    order,
                }
            }
            other => return Err(format!("unknown edit op '{other}'")),
        };
        self.edits.push(edit);
        Ok(())
    }

    fn finish(self) -> Result<ReactionTemplate, CatalogError> {
        let terr = |reason: String| CatalogError::Template {
            id: self.id.clone(),
            reason,
        };
        let n = self.atoms.len();
        if n == 0 {
            return Err(terr("pattern has no atoms".into()));
        }
        if n > Pattern::MAX_ATOMS {
            return Err(terr(format!("pattern exceeds {} atoms", Pattern::MAX_ATOMS)));
        }
        for b in &self.bonds {
            if b.a >= n || b.b >= n || b.a == b.b {
                return Err(terr(format!("bond {}-{} out of range", b.a, b.b)));
            }
        }
        let pattern = Pattern {
            atoms: self.atoms,
            bonds: self.bonds,
        };
        if !pattern.is_connected() {
            return Err(terr("pattern is not connected".into()));
        }

        // Edits may also address atoms attached earlier in the script.
        let mut reach = n;
        for e in &self.edits {
            let check = |i: usize| -> Result<(), CatalogError> {
                if i >= reach {
                    Err(CatalogError::Template {
                        id: self.id.clone(),
                        reason: format!("edit refers to atom {i} (only {reach} addressable)"),
                    })
                } else {
                    Ok(())
                }
            };
            match *e {
                Edit::AddBond(i, j, _) | Edit::RemoveBond(i, j) | Edit::SetBond(i, j, _) => {
                    check(i)?;
                    check(j)?;
                }
                Edit::SetCharge(i, _) | Edit::AddH(i, _) => check(i)?,
                Edit::Attach { to, .. } => {
                    check(to)?;
                    reach += 1;
                }
            }
        }
        if self.edits.is_empty() {
            return Err(terr("template has no edits".into()));
        }

        let parse_species = |smiles: &str| {
            parse_smiles(smiles)
                .map(|m| {
                    let c = canonicalize(&m);
                    (m, c)
                })
                .map_err(|e| terr(format!("bad species '{smiles}': {e:?}")))
        };
        let consumes = self
            .consumes
            .iter()
            .map(|s| parse_species(s))
            .collect::<Result<Vec<_>, _>>()?;
        let produces = self
            .produces
            .iter()
            .map(|s| parse_species(s))
            .collect::<Result<Vec<_>, _>>()?;

        Ok(ReactionTemplate {
            id: self.id,
            name: self.name,
            pattern,
            edits: self.edits,
            consumes,
            produces,
            reverse: self.reverse,
            approximate: self.approximate,
        })
    }
}

fn expect_one<'a>(rest: &[&'a str], what: &str) -> Result<&'a str, String> {
    match rest {
        [one] => Ok(one),
        _ => Err(format!("{what} takes exactly one argument")),
    }
}

fn parse_element(v: &str) -> Result<Element, String> {
    match v {
        "C" => Ok(Element::C),
        "O" => Ok(Element::O),
        other => Err(format!("unknown element '{other}'")),
    }
}

fn parse_charge(v: &str) -> Result<i8, String> {
    let v = v.strip_prefix('+').unwrap_or(v);
    let q: i8 = v.parse().map_err(|_| format!("bad charge '{v}'"))?;
    if !(-1..=1).contains(&q) {
        return Err(format!("charge {q} outside -1..=1"));
    }
    Ok(q)
}

fn parse_order(v: &str) -> Result<BondOrder, String> {
    match v {
        "1" => Ok(BondOrder::Single),
        "2" => Ok(BondOrder::Double),
        other => Err(format!("bad bond order '{other}'")),
    }
}

fn parse_yes_no(v: &str) -> Result<bool, String> {
    match v {
        "yes" => Ok(true),
        "no" => Ok(false),
        other => Err(format!("expected yes|no, got '{other}'")),
    }
}
