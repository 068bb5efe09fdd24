//! Topological polar surface area from Ertl-style atomic fragment
//! contributions, keyed on (element, bond-order pattern, hydrogen count) over
//! the kekulized graph. N, O, S, and P contribute; anything else is apolar.
//! Patterns outside the table contribute zero.

use crate::molgraph::{BondOrder, Element, MolGraph};

/// Bond-order counts around one atom.
struct Environment {
    singles: u32,
    doubles: u32,
    triples: u32,
    hydrogens: u32,
    in_three_ring: bool,
}

fn environment(g: &MolGraph, node: usize) -> Environment {
    let mut singles = 0;
    let mut doubles = 0;
    let mut triples = 0;
    for (_, e) in g.incident_edges(node) {
        match e.order {
            BondOrder::Single => singles += 1,
            BondOrder::Double => doubles += 1,
            BondOrder::Triple => triples += 1,
            BondOrder::Unset => {}
        }
    }
    let in_three_ring = g
        .neighbors(node)
        .any(|a| g.neighbors(node).any(|b| a < b && g.edge_between(a, b).is_some()));
    Environment {
        singles,
        doubles,
        triples,
        hydrogens: g.implicit_hydrogens(node).unwrap_or(0),
        in_three_ring,
    }
}

/// Published fragment contributions for the neutral, nonaromatic patterns
/// reachable in this vocabulary (values in Å²).
fn contribution(element: Element, env: &Environment) -> f64 {
    let Environment { singles, doubles, triples, hydrogens, in_three_ring } = *env;
    match (element, hydrogens, singles, doubles, triples) {
        (Element::N, 0, 3, 0, 0) if in_three_ring => 3.01,
        (Element::N, 0, 3, 0, 0) => 3.24,
        (Element::N, 0, 1, 1, 0) => 12.36,
        (Element::N, 0, 0, 0, 1) => 23.79,
        (Element::N, 0, 1, 2, 0) => 11.68,
        (Element::N, 0, 0, 1, 1) => 13.60,
        (Element::N, 1, 2, 0, 0) if in_three_ring => 21.94,
        (Element::N, 1, 2, 0, 0) => 12.03,
        (Element::N, 1, 0, 1, 0) => 23.85,
        (Element::N, 2, 1, 0, 0) => 26.02,
        (Element::O, 0, 2, 0, 0) if in_three_ring => 12.53,
        (Element::O, 0, 2, 0, 0) => 9.23,
        (Element::O, 0, 0, 1, 0) => 17.07,
        (Element::O, 1, 1, 0, 0) => 20.23,
        (Element::S, 0, 2, 0, 0) => 25.30,
        (Element::S, 0, 0, 1, 0) => 32.09,
        (Element::S, 0, 2, 1, 0) => 19.21,
        (Element::S, 0, 2, 2, 0) => 8.38,
        (Element::S, 1, 1, 0, 0) => 38.80,
        (Element::P, 0, 3, 0, 0) => 13.59,
        (Element::P, 0, 1, 1, 0) => 34.14,
        (Element::P, 0, 3, 1, 0) => 9.81,
        (Element::P, 1, 2, 1, 0) => 23.47,
        _ => 0.0,
    }
}

/// Sum of polar-atom fragment contributions, in Å².
pub fn tpsa(g: &MolGraph) -> f64 {
    (0..g.node_count())
        .map(|v| {
            let element = g.atom(v).element;
            match element {
                Element::N | Element::O | Element::S | Element::P => {
                    contribution(element, &environment(g, v))
                }
                _ => 0.0,
            }
        })
        .sum()
}
