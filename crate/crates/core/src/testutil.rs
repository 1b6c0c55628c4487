//! Fixtures shared across the crate's test modules.
//!
//! The full default-catalog expansion from fructose takes seconds, so it is
//! built once per test process and handed out behind an `Arc` that both the
//! network tests and the environment/oracle tests can share.

use crate::molgraph::{canonicalize, parse_smiles, CanonicalForm, MolGraph};
use crate::network::{expand, ExpandLimits, ReactionNetwork, SpeciesFilter};
use crate::rules::default_catalog;
use std::sync::{Arc, OnceLock};

pub(crate) const FRUCTOSE: &str = "OCC(=O)C(O)C(O)C(O)CO";
pub(crate) const HMF: &str = "OCC1=CC=C(C=O)O1";

pub(crate) fn mol(smiles: &str) -> MolGraph {
    parse_smiles(smiles).unwrap()
}

pub(crate) fn form(smiles: &str) -> CanonicalForm {
    canonicalize(&mol(smiles))
}

/// Full default expansion from fructose + water + hydronium, goal set to
/// hydroxymethylfurfural. Built on first use, then shared.
pub(crate) fn fructose_net() -> &'static Arc<ReactionNetwork> {
    static NET: OnceLock<Arc<ReactionNetwork>> = OnceLock::new();
    NET.get_or_init(|| {
        let mut net = expand(
            &[mol(FRUCTOSE), mol("O"), mol("[OH3+]")],
            default_catalog(),
            &SpeciesFilter::default(),
            &ExpandLimits::default(),
        )
        .unwrap();
        net.set_goal(&form(HMF)).unwrap();
        Arc::new(net)
    })
}
