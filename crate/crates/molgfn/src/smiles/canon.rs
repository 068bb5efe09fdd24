//! Canonical ranking and SMILES emission.
//!
//! Ranks start from (element, degree, explicit valence, ring membership) and
//! refine by sorted neighbor ranks to a fixpoint. Remaining ties are broken
//! by individualizing each member of the lowest ambiguous class in turn; the
//! lexicographically smallest emitted string wins. Chirality takes no part in
//! ranking and is excluded from the key.

use std::collections::BTreeMap;

use crate::molgraph::{BondOrder, Chirality, MolGraph};

use super::CanonicalKey;

/// Canonical strings for one graph: `key` has chirality stripped, `tagged`
/// carries it in bracket atoms. Both come from the same winning ranking.
pub(super) struct CanonResult {
    pub key: String,
    pub tagged: String,
}

/// Deterministic isomorphism key, identical across node relabelings and
/// chirality changes.
pub fn canonical_key(g: &MolGraph) -> CanonicalKey {
    if g.is_empty() {
        return CanonicalKey(String::new());
    }
    CanonicalKey(canonical_forms(g).key)
}

pub(super) fn canonical_forms(g: &MolGraph) -> CanonResult {
    let in_ring = g.ring_membership();
    let initial: Vec<Vec<u64>> = (0..g.node_count())
        .map(|v| {
            vec![
                g.atom(v).element.index() as u64,
                g.degree(v) as u64,
                u64::from(g.explicit_valence(v)),
                u64::from(in_ring[v]),
            ]
        })
        .collect();
    let ranks = refine(g, dense_ranks(&initial));
    let mut best: Option<(String, String)> = None;
    search(g, ranks, &mut best);
    let (key, tagged) = best.expect("nonempty graph always yields a ranking");
    CanonResult { key, tagged }
}

/// Maps arbitrary sortable keys to dense ranks 0..k.
fn dense_ranks(keys: &[Vec<u64>]) -> Vec<usize> {
    let mut order: BTreeMap<&Vec<u64>, usize> = BTreeMap::new();
    for k in keys {
        order.insert(k, 0);
    }
    for (rank, (_, slot)) in order.iter_mut().enumerate() {
        *slot = rank;
    }
    keys.iter().map(|k| order[k]).collect()
}

fn class_count(ranks: &[usize]) -> usize {
    ranks.iter().max().map_or(0, |m| m + 1)
}

/// Refines ranks by (own rank, sorted (neighbor rank, bond order)) until the
/// number of classes stops growing.
fn refine(g: &MolGraph, start: Vec<usize>) -> Vec<usize> {
    let mut ranks = start;
    let mut classes = class_count(&ranks);
    loop {
        let keys: Vec<Vec<u64>> = (0..g.node_count())
            .map(|v| {
                let mut nb: Vec<(u64, u64)> = g
                    .incident_edges(v)
                    .map(|(_, e)| {
                        (ranks[e.other(v).unwrap()] as u64, e.order.index() as u64)
                    })
                    .collect();
                nb.sort_unstable();
                let mut key = vec![ranks[v] as u64];
                for (r, o) in nb {
                    key.push(r);
                    key.push(o);
                }
                key
            })
            .collect();
        let next = dense_ranks(&keys);
        let next_classes = class_count(&next);
        if next_classes == classes {
            return next;
        }
        ranks = next;
        classes = next_classes;
    }
}

/// Explores tie-breaking choices and keeps the lexicographically smallest
/// stripped string (tagged string as a final tie-break).
fn search(g: &MolGraph, ranks: Vec<usize>, best: &mut Option<(String, String)>) {
    let n = g.node_count();
    if class_count(&ranks) == n {
        let cand = emit(g, &ranks);
        let better = match best {
            None => true,
            Some((key, tagged)) => cand.0 < *key || (cand.0 == *key && cand.1 < *tagged),
        };
        if better {
            *best = Some(cand);
        }
        return;
    }
    let mut counts = vec![0usize; n];
    for &r in &ranks {
        counts[r] += 1;
    }
    let ambiguous = counts.iter().position(|&c| c >= 2).unwrap();
    let members: Vec<usize> = (0..n).filter(|&v| ranks[v] == ambiguous).collect();
    for &m in &members {
        let keys: Vec<Vec<u64>> = (0..n)
            .map(|v| vec![ranks[v] as u64, u64::from(v != m)])
            .collect();
        let refined = refine(g, dense_ranks(&keys));
        search(g, refined, best);
    }
}

/// Writes the graph as kekulized SMILES following the given total order:
/// depth-first from the rank-0 atom, neighbors in ascending rank.
/// Returns (chirality-stripped, chirality-tagged) strings.
fn emit(g: &MolGraph, ranks: &[usize]) -> (String, String) {
    let n = g.node_count();
    let root = (0..n).find(|&v| ranks[v] == 0).unwrap();

    let mut walk = Walk {
        g,
        ranks,
        parent_edge: vec![None; n],
        children: vec![Vec::new(); n],
        pre: vec![usize::MAX; n],
        ring_edges: Vec::new(),
        counter: 0,
    };
    walk.discover(root, None);
    let Walk { parent_edge, children, pre, ring_edges, .. } = walk;
    debug_assert!(pre.iter().all(|&p| p != usize::MAX), "graph is connected");

    // Digit assignment in emission order; digits free up after closing.
    let mut digit_of_edge: BTreeMap<usize, u32> = BTreeMap::new();
    let mut free: Vec<u32> = (1..100).rev().collect(); // pop smallest from the back
    let mut events: Vec<(usize, usize)> = Vec::new(); // (pre position, edge)
    for &e in &ring_edges {
        let edge = g.edge(e);
        events.push((pre[edge.a].min(pre[edge.b]), e));
        events.push((pre[edge.a].max(pre[edge.b]), e));
    }
    events.sort_unstable();
    for (_, e) in events {
        if let Some(&d) = digit_of_edge.get(&e) {
            // Closing: digit becomes reusable afterwards.
            free.push(d);
            free.sort_unstable_by(|a, b| b.cmp(a));
        } else {
            let d = free.pop().expect("fewer than 99 simultaneous ring closures");
            digit_of_edge.insert(e, d);
        }
    }

    let mut key = String::new();
    let mut tagged = String::new();
    write_node(g, root, &children, &parent_edge, &ring_edges, &digit_of_edge, &pre, &mut key, &mut tagged);
    (key, tagged)
}

struct Walk<'g> {
    g: &'g MolGraph,
    ranks: &'g [usize],
    parent_edge: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    /// Discovery (preorder) position per node.
    pre: Vec<usize>,
    /// Non-tree edges, recorded once each.
    ring_edges: Vec<usize>,
    counter: usize,
}

impl Walk<'_> {
    fn discover(&mut self, u: usize, parent: Option<usize>) {
        self.pre[u] = self.counter;
        self.counter += 1;
        let mut nexts: Vec<(usize, usize, usize)> = self
            .g
            .incident_edges(u)
            .map(|(idx, e)| {
                let v = e.other(u).unwrap();
                (self.ranks[v], v, idx)
            })
            .collect();
        nexts.sort_unstable();
        for (_, v, idx) in nexts {
            if Some(idx) == parent {
                continue;
            }
            if self.pre[v] != usize::MAX {
                if !self.ring_edges.contains(&idx) {
                    self.ring_edges.push(idx);
                }
                continue;
            }
            self.parent_edge[v] = Some(idx);
            self.children[u].push(v);
            self.discover(v, Some(idx));
        }
    }
}

fn bond_symbol(order: BondOrder) -> &'static str {
    match order {
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Unset => "~", // never emitted for finished molecules
    }
}

#[allow(clippy::too_many_arguments)]
fn write_node(
    g: &MolGraph,
    u: usize,
    children: &[Vec<usize>],
    parent_edge: &[Option<usize>],
    ring_edges: &[usize],
    digit_of_edge: &BTreeMap<usize, u32>,
    pre: &[usize],
    key: &mut String,
    tagged: &mut String,
) {
    let atom = g.atom(u);
    let symbol = atom.element.symbol();
    key.push_str(symbol);
    if atom.chirality == Chirality::None {
        tagged.push_str(symbol);
    } else {
        tagged.push('[');
        tagged.push_str(symbol);
        tagged.push_str(match atom.chirality {
            Chirality::S => "@",
            Chirality::R => "@@",
            Chirality::None => unreachable!(),
        });
        let h = g.implicit_hydrogens(u).unwrap_or(0);
        if h == 1 {
            tagged.push('H');
        } else if h > 1 {
            tagged.push('H');
            tagged.push_str(&h.to_string());
        }
        tagged.push(']');
    }

    // Ring-closure digits, ordered by the preorder position of the far end.
    let mut closures: Vec<(usize, usize)> = ring_edges
        .iter()
        .filter(|&&e| {
            let edge = g.edge(e);
            edge.a == u || edge.b == u
        })
        .map(|&e| {
            let edge = g.edge(e);
            let other = edge.other(u).unwrap();
            (pre[other], e)
        })
        .collect();
    closures.sort_unstable();
    for (other_pre, e) in closures {
        let opening = pre[u] < other_pre;
        let mut frag = String::new();
        if opening {
            frag.push_str(bond_symbol(g.edge(e).order));
        }
        let d = digit_of_edge[&e];
        if d < 10 {
            frag.push_str(&d.to_string());
        } else {
            frag.push('%');
            frag.push_str(&format!("{d:02}"));
        }
        key.push_str(&frag);
        tagged.push_str(&frag);
    }

    let kids = &children[u];
    for (i, &c) in kids.iter().enumerate() {
        let edge_idx = parent_edge[c].unwrap();
        let sym = bond_symbol(g.edge(edge_idx).order);
        let last = i + 1 == kids.len();
        if !last {
            key.push('(');
            tagged.push('(');
        }
        key.push_str(sym);
        tagged.push_str(sym);
        write_node(g, c, children, parent_edge, ring_edges, digit_of_edge, pre, key, tagged);
        if !last {
            key.push(')');
            tagged.push(')');
        }
    }
}
