//! Attributed molecular graphs over a nine-element vocabulary.
//!
//! A [`MolGraph`] stores heavy atoms and bonds only; hydrogens are implicit
//! and derived from the valence model. Graphs are plain values: the MDP
//! produces new states by cloning and mutating, and anything handed out is
//! treated as immutable from then on.

use std::fmt;

use thiserror::Error;

/// Default cap on heavy atoms per molecule.
pub const DEFAULT_MAX_NODES: usize = 45;
/// Default cap on bonds per molecule.
pub const DEFAULT_MAX_EDGES: usize = 50;

/// Mass of implicit hydrogen in daltons.
pub const HYDROGEN_MASS: f64 = 1.008;

/// The atom vocabulary: carbon, sulfur, phosphorus, nitrogen, oxygen and the
/// four halogens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Element {
    C,
    S,
    P,
    N,
    O,
    F,
    Cl,
    Br,
    I,
}

/// All elements, in a fixed order used for action enumeration and one-hot
/// feature indexing.
pub const ALL_ELEMENTS: [Element; 9] = [
    Element::C,
    Element::S,
    Element::P,
    Element::N,
    Element::O,
    Element::F,
    Element::Cl,
    Element::Br,
    Element::I,
];

impl Element {
    /// Neutral-organic allowed valences, smallest first.
    pub fn allowed_valences(self) -> &'static [u32] {
        match self {
            Element::C => &[4],
            Element::N => &[3],
            Element::O => &[2],
            Element::S => &[2, 4, 6],
            Element::P => &[3, 5],
            Element::F | Element::Cl | Element::Br | Element::I => &[1],
        }
    }

    /// Largest allowed valence.
    pub fn max_valence(self) -> u32 {
        *self.allowed_valences().last().unwrap()
    }

    /// Standard atomic mass in daltons, to three decimals.
    pub fn atomic_mass(self) -> f64 {
        match self {
            Element::C => 12.011,
            Element::S => 32.060,
            Element::P => 30.974,
            Element::N => 14.007,
            Element::O => 15.999,
            Element::F => 18.998,
            Element::Cl => 35.450,
            Element::Br => 79.904,
            Element::I => 126.904,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Element::C => "C",
            Element::S => "S",
            Element::P => "P",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Element> {
        ALL_ELEMENTS.iter().copied().find(|e| e.symbol() == s)
    }

    /// Index into [`ALL_ELEMENTS`].
    pub fn index(self) -> usize {
        ALL_ELEMENTS.iter().position(|&e| e == self).unwrap()
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Symbolic chirality tag. No geometric semantics; canonical keys ignore it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub enum Chirality {
    #[default]
    None,
    R,
    S,
}

impl Chirality {
    pub fn index(self) -> usize {
        match self {
            Chirality::None => 0,
            Chirality::R => 1,
            Chirality::S => 2,
        }
    }
}

/// Bond order of an edge. `Unset` is a placeholder used by partially built
/// states; it contributes zero to explicit valence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub enum BondOrder {
    #[default]
    Unset,
    Single,
    Double,
    Triple,
}

impl BondOrder {
    /// Valence units consumed at each endpoint (0 while unset).
    pub fn valence_units(self) -> u32 {
        match self {
            BondOrder::Unset => 0,
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub fn from_units(units: u32) -> Option<BondOrder> {
        match units {
            1 => Some(BondOrder::Single),
            2 => Some(BondOrder::Double),
            3 => Some(BondOrder::Triple),
            _ => None,
        }
    }

    pub fn is_set(self) -> bool {
        self != BondOrder::Unset
    }

    pub fn index(self) -> usize {
        match self {
            BondOrder::Unset => 0,
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }
}

/// A heavy atom: element plus an optional chirality tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Atom {
    pub element: Element,
    pub chirality: Chirality,
}

impl Atom {
    pub fn new(element: Element) -> Atom {
        Atom { element, chirality: Chirality::None }
    }
}

/// A bond between two atoms, stored with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Edge {
    /// The endpoint opposite `node`, if `node` is an endpoint.
    pub fn other(&self, node: usize) -> Option<usize> {
        if self.a == node {
            Some(self.b)
        } else if self.b == node {
            Some(self.a)
        } else {
            None
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("node index {0} out of range")]
    NodeOutOfRange(usize),
    #[error("edge index {0} out of range")]
    EdgeOutOfRange(usize),
    #[error("explicit valence {valence} on node {node} exceeds every allowed valence of {element}")]
    ValenceOverflow { node: usize, element: Element, valence: u32 },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge between {0} and {1}")]
    DuplicateEdge(usize, usize),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("node count {0} exceeds cap {1}")]
    TooManyNodes(usize, usize),
    #[error("edge count {0} exceeds cap {1}")]
    TooManyEdges(usize, usize),
    #[error("graph is empty")]
    Empty,
}

/// An attributed molecular graph. Hydrogens are never stored; they are
/// derived per atom as the deficit to the smallest feasible allowed valence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct MolGraph {
    atoms: Vec<Atom>,
    edges: Vec<Edge>,
}

impl MolGraph {
    pub fn new() -> MolGraph {
        MolGraph::default()
    }

    pub fn node_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atom(&self, node: usize) -> &Atom {
        &self.atoms[node]
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn edge(&self, idx: usize) -> &Edge {
        &self.edges[idx]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Appends an atom and returns its index.
    pub fn add_node(&mut self, element: Element) -> usize {
        self.atoms.push(Atom::new(element));
        self.atoms.len() - 1
    }

    /// Appends an order-unset edge and returns its index. Panics on
    /// self-loops or duplicate pairs; callers enforce legality first.
    pub fn add_edge(&mut self, u: usize, v: usize) -> usize {
        assert!(u != v, "self-loop on node {u}");
        assert!(u < self.atoms.len() && v < self.atoms.len(), "edge endpoint out of range");
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        assert!(self.edge_between(a, b).is_none(), "duplicate edge {a}-{b}");
        self.edges.push(Edge { a, b, order: BondOrder::Unset });
        self.edges.len() - 1
    }

    pub fn set_edge_order(&mut self, edge: usize, order: BondOrder) {
        self.edges[edge].order = order;
    }

    pub fn set_chirality(&mut self, node: usize, tag: Chirality) {
        self.atoms[node].chirality = tag;
    }

    /// Removes the node and every incident edge; higher node indices shift
    /// down by one.
    pub fn remove_node(&mut self, node: usize) {
        assert!(node < self.atoms.len());
        self.edges.retain(|e| e.a != node && e.b != node);
        for e in &mut self.edges {
            if e.a > node {
                e.a -= 1;
            }
            if e.b > node {
                e.b -= 1;
            }
        }
        self.atoms.remove(node);
    }

    /// Removes the edge; higher edge indices shift down by one.
    pub fn remove_edge(&mut self, edge: usize) {
        assert!(edge < self.edges.len());
        self.edges.remove(edge);
    }

    pub fn edge_between(&self, u: usize, v: usize) -> Option<usize> {
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        self.edges.iter().position(|e| e.a == a && e.b == b)
    }

    pub fn incident_edges(&self, node: usize) -> impl Iterator<Item = (usize, &Edge)> {
        self.edges.iter().enumerate().filter(move |(_, e)| e.a == node || e.b == node)
    }

    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.incident_edges(node).map(move |(_, e)| e.other(node).unwrap())
    }

    pub fn degree(&self, node: usize) -> usize {
        self.incident_edges(node).count()
    }

    /// Sum of set bond orders over incident edges; unset edges count zero.
    pub fn explicit_valence(&self, node: usize) -> u32 {
        assert!(node < self.atoms.len(), "node index {node} out of range");
        self.incident_edges(node).map(|(_, e)| e.order.valence_units()).sum()
    }

    /// Number of incident edges whose order is still unset.
    pub fn unset_edge_count(&self, node: usize) -> u32 {
        self.incident_edges(node).filter(|(_, e)| !e.order.is_set()).count() as u32
    }

    /// Implicit hydrogen count: smallest allowed valence that covers the
    /// explicit valence, minus the explicit valence.
    pub fn implicit_hydrogens(&self, node: usize) -> Result<u32, GraphError> {
        assert!(node < self.atoms.len(), "node index {node} out of range");
        let explicit = self.explicit_valence(node);
        let element = self.atoms[node].element;
        element
            .allowed_valences()
            .iter()
            .find(|&&v| v >= explicit)
            .map(|&v| v - explicit)
            .ok_or(GraphError::ValenceOverflow { node, element, valence: explicit })
    }

    /// Molecular weight: heavy atoms plus implicit hydrogens.
    pub fn molecular_weight(&self) -> f64 {
        let heavy: f64 = self.atoms.iter().map(|a| a.element.atomic_mass()).sum();
        let hydrogens: u32 =
            (0..self.atoms.len()).map(|n| self.implicit_hydrogens(n).unwrap_or(0)).sum();
        heavy + HYDROGEN_MASS * f64::from(hydrogens)
    }

    /// True when every pair of nodes is joined by some path. The empty graph
    /// and single nodes are connected.
    pub fn is_connected(&self) -> bool {
        if self.atoms.len() <= 1 {
            return true;
        }
        let mut seen = vec![false; self.atoms.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for u in self.neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == self.atoms.len()
    }

    /// True when removing `node` leaves the remaining nodes connected.
    pub fn connected_without_node(&self, node: usize) -> bool {
        let n = self.atoms.len();
        if n <= 2 {
            return true;
        }
        let start = if node == 0 { 1 } else { 0 };
        let mut seen = vec![false; n];
        seen[node] = true; // excluded
        let mut stack = vec![start];
        seen[start] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for u in self.neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == n - 1
    }

    /// True when removing `edge` leaves the graph connected (i.e. the edge is
    /// not a bridge).
    pub fn connected_without_edge(&self, edge: usize) -> bool {
        let e = self.edges[edge];
        let n = self.atoms.len();
        let mut seen = vec![false; n];
        let mut stack = vec![e.a];
        seen[e.a] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for (idx, ed) in self.incident_edges(v) {
                if idx == edge {
                    continue;
                }
                let u = ed.other(v).unwrap();
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == n && seen[e.b]
    }

    /// Per-node cycle membership: a node is in a ring iff it has an incident
    /// non-bridge edge.
    pub fn ring_membership(&self) -> Vec<bool> {
        let mut in_ring = vec![false; self.atoms.len()];
        for (idx, e) in self.edges.iter().enumerate() {
            if !self.connected_without_edge(idx) {
                continue; // bridge
            }
            in_ring[e.a] = true;
            in_ring[e.b] = true;
        }
        in_ring
    }

    /// Checks every structural invariant: connectivity, valences, no
    /// self-loops or duplicate edges, and the node/edge caps.
    pub fn validate(&self, max_nodes: usize, max_edges: usize) -> Result<(), GraphError> {
        if self.atoms.len() > max_nodes {
            return Err(GraphError::TooManyNodes(self.atoms.len(), max_nodes));
        }
        if self.edges.len() > max_edges {
            return Err(GraphError::TooManyEdges(self.edges.len(), max_edges));
        }
        let mut seen_pairs = std::collections::HashSet::new();
        for e in &self.edges {
            if e.a == e.b {
                return Err(GraphError::SelfLoop(e.a));
            }
            if e.a >= self.atoms.len() || e.b >= self.atoms.len() {
                return Err(GraphError::NodeOutOfRange(e.a.max(e.b)));
            }
            if !seen_pairs.insert((e.a, e.b)) {
                return Err(GraphError::DuplicateEdge(e.a, e.b));
            }
        }
        for node in 0..self.atoms.len() {
            let explicit = self.explicit_valence(node);
            let element = self.atoms[node].element;
            if explicit > element.max_valence() {
                return Err(GraphError::ValenceOverflow { node, element, valence: explicit });
            }
        }
        if !self.is_connected() {
            return Err(GraphError::Disconnected);
        }
        Ok(())
    }

    /// True when every edge has a set bond order.
    pub fn all_orders_set(&self) -> bool {
        self.edges.iter().all(|e| e.order.is_set())
    }

    /// Returns the graph with nodes relabeled by `perm`, where `perm[old]`
    /// is the new index. Edge order in the output follows the original edge
    /// list with endpoints renamed and renormalized.
    pub fn permuted(&self, perm: &[usize]) -> MolGraph {
        assert_eq!(perm.len(), self.atoms.len());
        let mut atoms = vec![Atom::new(Element::C); self.atoms.len()];
        for (old, &new) in perm.iter().enumerate() {
            atoms[new] = self.atoms[old];
        }
        let mut edges: Vec<Edge> = self
            .edges
            .iter()
            .map(|e| {
                let (a, b) = (perm[e.a], perm[e.b]);
                let (a, b) = if a < b { (a, b) } else { (b, a) };
                Edge { a, b, order: e.order }
            })
            .collect();
        edges.sort_by_key(|e| (e.a, e.b));
        MolGraph { atoms, edges }
    }

    /// Bemis-Murcko scaffold: ring systems plus the linkers between them.
    ///
    /// Terminal (degree <= 1) non-ring atoms are pruned iteratively;
    /// double-bonded terminal atoms whose partner survives are kept, so an
    /// exocyclic =O on a ring or linker atom stays. Acyclic graphs reduce to
    /// the empty graph.
    pub fn bemis_murcko_scaffold(&self) -> MolGraph {
        let n = self.atoms.len();
        let in_ring = self.ring_membership();
        if !in_ring.iter().any(|&r| r) {
            return MolGraph::new();
        }
        let mut alive = vec![true; n];
        loop {
            let mut changed = false;
            for v in 0..n {
                if !alive[v] || in_ring[v] {
                    continue;
                }
                let deg = self
                    .incident_edges(v)
                    .filter(|(_, e)| alive[e.other(v).unwrap()])
                    .count();
                if deg <= 1 {
                    alive[v] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        // Restore double-bonded terminal atoms attached to the skeleton.
        for v in 0..n {
            if alive[v] {
                continue;
            }
            let keeps = self.incident_edges(v).any(|(_, e)| {
                e.order == BondOrder::Double && alive[e.other(v).unwrap()]
            });
            if keeps {
                alive[v] = true;
            }
        }
        let mut remap = vec![usize::MAX; n];
        let mut out = MolGraph::new();
        for v in 0..n {
            if alive[v] {
                remap[v] = out.atoms.len();
                out.atoms.push(self.atoms[v]);
            }
        }
        for e in &self.edges {
            if alive[e.a] && alive[e.b] {
                out.edges.push(Edge { a: remap[e.a], b: remap[e.b], order: e.order });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ethane() -> MolGraph {
        let mut g = MolGraph::new();
        let a = g.add_node(Element::C);
        let b = g.add_node(Element::C);
        let e = g.add_edge(a, b);
        g.set_edge_order(e, BondOrder::Single);
        g
    }

    fn acetone() -> MolGraph {
        // CC(=O)C
        let mut g = MolGraph::new();
        let c0 = g.add_node(Element::C);
        let c1 = g.add_node(Element::C);
        let o = g.add_node(Element::O);
        let c3 = g.add_node(Element::C);
        let e0 = g.add_edge(c0, c1);
        let e1 = g.add_edge(c1, o);
        let e2 = g.add_edge(c1, c3);
        g.set_edge_order(e0, BondOrder::Single);
        g.set_edge_order(e1, BondOrder::Double);
        g.set_edge_order(e2, BondOrder::Single);
        g
    }

    pub(crate) fn benzene() -> MolGraph {
        let mut g = MolGraph::new();
        for _ in 0..6 {
            g.add_node(Element::C);
        }
        for i in 0..6 {
            let e = g.add_edge(i, (i + 1) % 6);
            let order = if i % 2 == 0 { BondOrder::Double } else { BondOrder::Single };
            g.set_edge_order(e, order);
        }
        g
    }

    #[test]
    fn explicit_valence_ethane() {
        let g = ethane();
        assert_eq!(g.explicit_valence(0), 1);
        assert_eq!(g.explicit_valence(1), 1);
    }

    #[test]
    fn explicit_valence_isolated_atom() {
        let mut g = MolGraph::new();
        g.add_node(Element::C);
        assert_eq!(g.explicit_valence(0), 0);
    }

    #[test]
    fn explicit_valence_carbonyl_carbon() {
        let g = acetone();
        assert_eq!(g.explicit_valence(1), 4);
    }

    #[test]
    fn implicit_hydrogens_basics() {
        let mut g = MolGraph::new();
        g.add_node(Element::C);
        assert_eq!(g.implicit_hydrogens(0).unwrap(), 4);

        let mut w = MolGraph::new();
        w.add_node(Element::O);
        assert_eq!(w.implicit_hydrogens(0).unwrap(), 2);
    }

    #[test]
    fn implicit_hydrogens_nitrogen_two_bonds() {
        let mut g = MolGraph::new();
        let n = g.add_node(Element::N);
        let c1 = g.add_node(Element::C);
        let c2 = g.add_node(Element::C);
        let e1 = g.add_edge(n, c1);
        let e2 = g.add_edge(n, c2);
        g.set_edge_order(e1, BondOrder::Single);
        g.set_edge_order(e2, BondOrder::Single);
        assert_eq!(g.implicit_hydrogens(n).unwrap(), 1);
    }

    #[test]
    fn implicit_hydrogens_sulfur_steps_up() {
        // S with three single bonds steps to the next allowed valence (4).
        let mut g = MolGraph::new();
        let s = g.add_node(Element::S);
        for _ in 0..3 {
            let c = g.add_node(Element::C);
            let e = g.add_edge(s, c);
            g.set_edge_order(e, BondOrder::Single);
        }
        assert_eq!(g.implicit_hydrogens(s).unwrap(), 1);
    }

    #[test]
    fn valence_overflow_is_reported() {
        let mut g = MolGraph::new();
        let o = g.add_node(Element::O);
        let c1 = g.add_node(Element::C);
        let c2 = g.add_node(Element::C);
        let e1 = g.add_edge(o, c1);
        let e2 = g.add_edge(o, c2);
        g.set_edge_order(e1, BondOrder::Double);
        g.set_edge_order(e2, BondOrder::Double);
        assert!(matches!(
            g.implicit_hydrogens(o),
            Err(GraphError::ValenceOverflow { valence: 4, .. })
        ));
    }

    #[test]
    fn molecular_weight_examples() {
        assert_eq!(MolGraph::new().molecular_weight(), 0.0);

        let mut methane = MolGraph::new();
        methane.add_node(Element::C);
        assert!((methane.molecular_weight() - 16.043).abs() < 1e-9);

        // ethanol: CCO
        let mut g = MolGraph::new();
        let c0 = g.add_node(Element::C);
        let c1 = g.add_node(Element::C);
        let o = g.add_node(Element::O);
        let e0 = g.add_edge(c0, c1);
        let e1 = g.add_edge(c1, o);
        g.set_edge_order(e0, BondOrder::Single);
        g.set_edge_order(e1, BondOrder::Single);
        assert!((g.molecular_weight() - 46.069).abs() < 1e-9);
    }

    #[test]
    fn molecular_weight_additive_over_fragments() {
        let a = ethane();
        let b = acetone();
        let sum = a.molecular_weight() + b.molecular_weight();
        // Concatenate as two values and compare against summing separately.
        assert!((sum - (30.07 + 58.08)).abs() < 0.01);
    }

    #[test]
    fn scaffold_of_benzene_is_benzene() {
        let g = benzene();
        let s = g.bemis_murcko_scaffold();
        assert_eq!(s.node_count(), 6);
        assert_eq!(s.edge_count(), 6);
    }

    #[test]
    fn scaffold_of_toluene_is_benzene() {
        let mut g = benzene();
        let methyl = g.add_node(Element::C);
        let e = g.add_edge(0, methyl);
        g.set_edge_order(e, BondOrder::Single);
        let s = g.bemis_murcko_scaffold();
        assert_eq!(s.node_count(), 6);
        assert_eq!(s.edge_count(), 6);
        assert!(s.atoms().iter().all(|a| a.element == Element::C));
    }

    #[test]
    fn scaffold_of_hexane_is_empty() {
        let mut g = MolGraph::new();
        let mut prev = g.add_node(Element::C);
        for _ in 0..5 {
            let c = g.add_node(Element::C);
            let e = g.add_edge(prev, c);
            g.set_edge_order(e, BondOrder::Single);
            prev = c;
        }
        assert!(g.bemis_murcko_scaffold().is_empty());
    }

    #[test]
    fn scaffold_keeps_exocyclic_double_bond() {
        // cyclohexanone: ring C6 with =O on one ring atom
        let mut g = MolGraph::new();
        for _ in 0..6 {
            g.add_node(Element::C);
        }
        for i in 0..6 {
            let e = g.add_edge(i, (i + 1) % 6);
            g.set_edge_order(e, BondOrder::Single);
        }
        let o = g.add_node(Element::O);
        let e = g.add_edge(0, o);
        g.set_edge_order(e, BondOrder::Double);
        let s = g.bemis_murcko_scaffold();
        assert_eq!(s.node_count(), 7);
        assert!(s.atoms().iter().any(|a| a.element == Element::O));
    }

    #[test]
    fn scaffold_idempotent() {
        let mut g = benzene();
        let c = g.add_node(Element::C);
        let e = g.add_edge(2, c);
        g.set_edge_order(e, BondOrder::Single);
        let o = g.add_node(Element::O);
        let e = g.add_edge(c, o);
        g.set_edge_order(e, BondOrder::Double);
        let s1 = g.bemis_murcko_scaffold();
        let s2 = s1.bemis_murcko_scaffold();
        assert_eq!(s1, s2);
    }

    #[test]
    fn validate_catches_disconnection() {
        let mut g = MolGraph::new();
        g.add_node(Element::C);
        g.add_node(Element::C);
        assert_eq!(
            g.validate(DEFAULT_MAX_NODES, DEFAULT_MAX_EDGES),
            Err(GraphError::Disconnected)
        );
    }

    #[test]
    fn validate_accepts_benzene() {
        assert_eq!(benzene().validate(DEFAULT_MAX_NODES, DEFAULT_MAX_EDGES), Ok(()));
    }

    #[test]
    fn ring_membership_flags_only_cycle_atoms() {
        let mut g = benzene();
        let methyl = g.add_node(Element::C);
        let e = g.add_edge(0, methyl);
        g.set_edge_order(e, BondOrder::Single);
        let rings = g.ring_membership();
        assert!(rings[..6].iter().all(|&r| r));
        assert!(!rings[6]);
    }
}
