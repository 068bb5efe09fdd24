//! Octanol/water partition estimate from a reduced Wildman-Crippen atomic
//! contribution table.
//!
//! The published scheme distinguishes ~70 atom types; this reduction keeps
//! one type per (element, aromatic-like, coarse environment) bucket, using
//! the published value of the bucket's most common member. Good enough for
//! the directional reward shaping it feeds; not an RDKit replacement.

use crate::molgraph::{BondOrder, Element, MolGraph};

use super::rings::sssr;

/// Flags atoms that sit in a 5- or 6-ring capable of an alternating bond
/// pattern: every ring carbon carries a double bond, and ring N/O/S either
/// carries one or donates a lone pair.
pub(super) fn aromatic_like(g: &MolGraph) -> Vec<bool> {
    let mut out = vec![false; g.node_count()];
    for ring in sssr(g) {
        if ring.len() != 5 && ring.len() != 6 {
            continue;
        }
        let ok = ring.iter().all(|&v| {
            let has_double = g
                .incident_edges(v)
                .any(|(_, e)| e.order == BondOrder::Double);
            let no_triple_in_ring = g.incident_edges(v).all(|(_, e)| {
                e.order != BondOrder::Triple
                    || !ring.contains(&e.other(v).unwrap())
            });
            let lone_pair_donor = match g.atom(v).element {
                Element::O | Element::S => true,
                Element::N => g.implicit_hydrogens(v).unwrap_or(0) >= 1 || g.degree(v) == 3,
                _ => false,
            };
            no_triple_in_ring && (has_double || lone_pair_donor)
        });
        if ok {
            for &v in &ring {
                out[v] = true;
            }
        }
    }
    out
}

fn heteroatom(e: Element) -> bool {
    e != Element::C
}

/// Reduced per-atom contribution, including the atom's implicit hydrogens.
fn atom_contribution(g: &MolGraph, v: usize, aromatic: &[bool]) -> f64 {
    let element = g.atom(v).element;
    let h = g.implicit_hydrogens(v).unwrap_or(0) as f64;
    let has_hetero_neighbor = g.neighbors(v).any(|u| heteroatom(g.atom(u).element));
    let has_triple = g.incident_edges(v).any(|(_, e)| e.order == BondOrder::Triple);
    let has_double = g.incident_edges(v).any(|(_, e)| e.order == BondOrder::Double);

    let own = match element {
        Element::C => {
            if aromatic[v] {
                0.1581
            } else if has_hetero_neighbor {
                -0.2035
            } else {
                0.1441
            }
        }
        Element::N => {
            if aromatic[v] {
                -0.3239
            } else if has_triple {
                -0.1036
            } else {
                match g.implicit_hydrogens(v).unwrap_or(0) {
                    2 => -1.0190,
                    1 => -0.7096,
                    _ => -0.3187,
                }
            }
        }
        Element::O => {
            if aromatic[v] {
                0.1552
            } else if has_double {
                -0.1526
            } else if g.implicit_hydrogens(v).unwrap_or(0) >= 1 {
                -0.2893
            } else {
                -0.0684
            }
        }
        Element::S => {
            if aromatic[v] {
                0.6237
            } else {
                0.6482
            }
        }
        Element::P => 0.8612,
        Element::F => 0.4202,
        Element::Cl => 0.6895,
        Element::Br => 0.8456,
        Element::I => 0.8857,
    };

    let per_h = match element {
        Element::O => -0.2677,
        Element::N => 0.2142,
        _ => 0.1230,
    };
    own + h * per_h
}

/// Estimated logP: sum of atomic contributions plus implicit hydrogens.
pub fn logp(g: &MolGraph) -> f64 {
    let aromatic = aromatic_like(g);
    (0..g.node_count()).map(|v| atom_contribution(g, v, &aromatic)).sum()
}
