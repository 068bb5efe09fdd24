//! Smallest set of smallest rings via greedy shortest-cycle selection with a
//! GF(2) independence check over edge space.

use crate::molgraph::MolGraph;

/// Edge-incidence bitset for one cycle.
#[derive(Clone)]
struct CycleVec {
    words: Vec<u64>,
}

impl CycleVec {
    fn new(edge_count: usize) -> CycleVec {
        CycleVec { words: vec![0; edge_count.div_ceil(64)] }
    }

    fn set(&mut self, edge: usize) {
        self.words[edge / 64] |= 1 << (edge % 64);
    }

    fn xor(&mut self, other: &CycleVec) {
        for (w, o) in self.words.iter_mut().zip(&other.words) {
            *w ^= o;
        }
    }

    fn lowest_bit(&self) -> Option<usize> {
        for (i, w) in self.words.iter().enumerate() {
            if *w != 0 {
                return Some(i * 64 + w.trailing_zeros() as usize);
            }
        }
        None
    }
}

/// Returns the SSSR as node lists, each a closed cycle in traversal order.
///
/// Candidate rings are the shortest cycles through every edge; they enter the
/// set smallest-first (ties by node order) while independent in GF(2) edge
/// space, stopping at the cycle-space dimension E - V + components.
pub fn sssr(g: &MolGraph) -> Vec<Vec<usize>> {
    let v = g.node_count();
    let e = g.edge_count();
    // Cycle-space dimension of a connected graph.
    let dim = (e + 1).saturating_sub(v);
    if dim == 0 {
        return Vec::new();
    }

    let mut candidates: Vec<Vec<usize>> = (0..e)
        .filter_map(|idx| shortest_cycle_through(g, idx))
        .collect();
    candidates.sort_by_key(|cycle| {
        let mut sorted = cycle.clone();
        sorted.sort_unstable();
        (cycle.len(), sorted)
    });
    candidates.dedup();

    // Greedy selection with a GF(2) basis; each basis vector keeps a unique
    // pivot (lowest set bit), so full reduction decides independence.
    let mut basis: Vec<CycleVec> = Vec::new();
    let mut chosen: Vec<Vec<usize>> = Vec::new();
    for cycle in candidates {
        if chosen.len() == dim {
            break;
        }
        let mut reduced = CycleVec::new(e);
        for i in 0..cycle.len() {
            let a = cycle[i];
            let b = cycle[(i + 1) % cycle.len()];
            reduced.set(g.edge_between(a, b).expect("cycle follows real edges"));
        }
        loop {
            let Some(low) = reduced.lowest_bit() else { break };
            match basis.iter().find(|b| b.lowest_bit() == Some(low)) {
                Some(b) => {
                    let b = b.clone();
                    reduced.xor(&b);
                }
                None => break,
            }
        }
        if reduced.lowest_bit().is_some() {
            basis.push(reduced);
            chosen.push(cycle);
        }
    }
    chosen
}

/// Shortest cycle containing `edge`: BFS from one endpoint to the other with
/// the edge removed, plus the edge itself. `None` for bridges.
fn shortest_cycle_through(g: &MolGraph, edge: usize) -> Option<Vec<usize>> {
    let e = g.edge(edge);
    let n = g.node_count();
    let mut prev = vec![usize::MAX; n];
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(e.a);
    seen[e.a] = true;
    while let Some(x) = queue.pop_front() {
        if x == e.b {
            break;
        }
        let mut nbs: Vec<usize> = Vec::new();
        for (idx, ed) in g.incident_edges(x) {
            if idx == edge {
                continue;
            }
            nbs.push(ed.other(x).unwrap());
        }
        nbs.sort_unstable();
        for u in nbs {
            if !seen[u] {
                seen[u] = true;
                prev[u] = x;
                queue.push_back(u);
            }
        }
    }
    if !seen[e.b] {
        return None;
    }
    let mut path = vec![e.b];
    let mut cur = e.b;
    while cur != e.a {
        cur = prev[cur];
        path.push(cur);
    }
    path.reverse();
    Some(path)
}

/// Number of SSSR rings of size 5 or 6.
pub fn ring_count_5_6(g: &MolGraph) -> usize {
    sssr(g).iter().filter(|r| r.len() == 5 || r.len() == 6).count()
}

/// Total number of SSSR rings (cycle-space dimension for connected graphs).
pub fn ring_count_total(g: &MolGraph) -> usize {
    sssr(g).len()
}
