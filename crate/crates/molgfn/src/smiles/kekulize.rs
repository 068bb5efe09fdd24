//! Aromatic-bond resolution: each aromatic atom that needs one double bond is
//! matched against a neighbor, everything else becomes single.

use crate::molgraph::BondOrder;

use super::parser::{EdgeKind, ParsedAtom, ParsedEdge};
use super::SmilesError;

/// Replaces every `EdgeKind::Aromatic` with a fixed order, or fails when no
/// alternating assignment exists.
///
/// Needs-a-double-bond rules: aromatic carbon always; aromatic nitrogen only
/// when written without a hydrogen; aromatic oxygen and sulfur never. An atom
/// already carrying a fixed double or triple bond is treated as satisfied.
pub(super) fn kekulize(
    atoms: &[ParsedAtom],
    edges: &mut [ParsedEdge],
) -> Result<(), SmilesError> {
    let n = atoms.len();
    let aromatic_edges: Vec<usize> = edges
        .iter()
        .enumerate()
        .filter(|(_, e)| e.kind == EdgeKind::Aromatic)
        .map(|(i, _)| i)
        .collect();

    for &i in &aromatic_edges {
        let e = &edges[i];
        if !atoms[e.a].aromatic || !atoms[e.b].aromatic {
            return Err(SmilesError::Kekulization(format!(
                "aromatic bond between atoms {} and {} touches a non-aromatic atom",
                e.a, e.b
            )));
        }
    }

    // Every aromatic atom must sit on a cycle of the aromatic subgraph.
    for (v, atom) in atoms.iter().enumerate() {
        if !atom.aromatic {
            continue;
        }
        if !in_aromatic_cycle(v, edges, &aromatic_edges) {
            return Err(SmilesError::Kekulization(format!(
                "aromatic atom {v} is not part of an aromatic ring"
            )));
        }
    }

    let mut needs = vec![false; n];
    for (v, atom) in atoms.iter().enumerate() {
        if !atom.aromatic {
            continue;
        }
        use crate::molgraph::Element::*;
        needs[v] = match atom.element {
            C => true,
            N => atom.h_spec.unwrap_or(0) == 0,
            O | S => false,
            other => {
                return Err(SmilesError::Kekulization(format!(
                    "element {other} cannot be aromatic in this subset"
                )))
            }
        };
        // A fixed double/triple bond already satisfies the atom.
        let has_fixed_multiple = edges.iter().any(|e| {
            (e.a == v || e.b == v)
                && matches!(e.kind, EdgeKind::Fixed(BondOrder::Double | BondOrder::Triple))
        });
        if has_fixed_multiple {
            needs[v] = false;
        }
    }

    // Adjacency over aromatic bonds joining two needs-double atoms.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &i in &aromatic_edges {
        let e = &edges[i];
        if needs[e.a] && needs[e.b] {
            adj[e.a].push(e.b);
            adj[e.b].push(e.a);
        }
    }

    let mut mate: Vec<Option<usize>> = vec![None; n];
    if !match_all(&needs, &adj, &mut mate, 0) {
        return Err(SmilesError::Kekulization(
            "no alternating single/double assignment covers the aromatic system".into(),
        ));
    }

    for &i in &aromatic_edges {
        let (a, b) = (edges[i].a, edges[i].b);
        let order = if mate[a] == Some(b) { BondOrder::Double } else { BondOrder::Single };
        edges[i].kind = EdgeKind::Fixed(order);
    }
    Ok(())
}

/// Backtracking perfect matching over the needs-double atoms, scanning from
/// `from` for the first unmatched one.
fn match_all(
    needs: &[bool],
    adj: &[Vec<usize>],
    mate: &mut Vec<Option<usize>>,
    from: usize,
) -> bool {
    let mut u = from;
    while u < needs.len() && (!needs[u] || mate[u].is_some()) {
        u += 1;
    }
    if u == needs.len() {
        return true;
    }
    for &v in &adj[u] {
        if mate[v].is_none() {
            mate[u] = Some(v);
            mate[v] = Some(u);
            if match_all(needs, adj, mate, u + 1) {
                return true;
            }
            mate[u] = None;
            mate[v] = None;
        }
    }
    false
}

/// True when `v` has an incident aromatic edge that lies on a cycle of the
/// aromatic subgraph (i.e. is not a bridge of it).
fn in_aromatic_cycle(v: usize, edges: &[ParsedEdge], aromatic_edges: &[usize]) -> bool {
    aromatic_edges.iter().any(|&i| {
        let e = &edges[i];
        if e.a != v && e.b != v {
            return false;
        }
        // Connected from e.a to e.b without edge i, using aromatic edges only.
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![e.a];
        seen.insert(e.a);
        while let Some(x) = stack.pop() {
            if x == e.b {
                return true;
            }
            for &j in aromatic_edges {
                if j == i {
                    continue;
                }
                let f = &edges[j];
                let next = if f.a == x {
                    f.b
                } else if f.b == x {
                    f.a
                } else {
                    continue;
                };
                if seen.insert(next) {
                    stack.push(next);
                }
            }
        }
        false
    })
}
