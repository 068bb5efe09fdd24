//! The molecule-construction MDP: states, forward/backward action
//! enumeration with legality masks, transitions, and deconstruction of
//! finished molecules into forward trajectories.
//!
//! Masking is dead-end free by valence reservation: every order-unset edge
//! reserves one valence unit at each endpoint, so any reachable state can
//! always set its remaining edges to single bonds and stop. A trajectory
//! length budget is enforced the same way: an action is only offered when the
//! cheapest completion of the resulting state still fits.

use thiserror::Error;

use crate::molgraph::{BondOrder, Chirality, Element, MolGraph, ALL_ELEMENTS};

#[derive(Debug, Error, PartialEq)]
pub enum MdpError {
    #[error("no forward actions on a stopped state")]
    Stopped,
    #[error("no backward actions on an empty state")]
    EmptyState,
    #[error("no backward actions on a frozen seed state")]
    AtSeed,
    #[error("action {0:?} is illegal in this state")]
    IllegalAction(Action),
    #[error("scaffold seed must be a finished molecule: {0}")]
    BadSeed(String),
    #[error("deconstruction exceeded {0} backward steps in every attempt")]
    BackStepsExceeded(usize),
    #[error("molecule does not fit the configured caps: {0}")]
    OutsideCaps(String),
}

/// Construction and deconstruction moves. Forward actions append: a node
/// added by `AddNode` takes the next node index and its connecting edge the
/// next edge index, which keeps inverses literal (delete-last forms).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    /// Adds a node; `attach: None` is only legal on the empty state,
    /// otherwise a fresh order-unset edge joins the new node to `attach`.
    AddNode { attach: Option<usize>, element: Element },
    /// Adds an order-unset edge between two existing nodes (u < v).
    AddEdge { u: usize, v: usize },
    SetNodeAttr { node: usize, tag: Chirality },
    SetEdgeAttr { edge: usize, order: BondOrder },
    Stop,
    /// Removes a lone attribute-free node (single-node states only).
    DeleteNode { node: usize },
    /// Removes an order-unset edge; when that strands a degree-one endpoint,
    /// the endpoint goes with it (the inverse of `AddNode`).
    DeleteEdge { edge: usize },
    UnsetNodeAttr { node: usize },
    UnsetEdgeAttr { edge: usize },
}

impl Action {
    pub fn is_forward(&self) -> bool {
        matches!(
            self,
            Action::AddNode { .. }
                | Action::AddEdge { .. }
                | Action::SetNodeAttr { .. }
                | Action::SetEdgeAttr { .. }
                | Action::Stop
        )
    }
}

/// Environment knobs. The defaults are the paper-scale molecule caps; toy
/// domains shrink the vocabulary to keep brute-force enumeration tractable.
#[derive(Debug, Clone)]
pub struct MdpConfig {
    pub max_nodes: usize,
    pub max_edges: usize,
    pub max_traj_len: usize,
    pub allowed_elements: Vec<Element>,
    pub allowed_bond_orders: Vec<BondOrder>,
    /// Offer chirality SetNodeAttr/UnsetNodeAttr actions.
    pub enable_node_attrs: bool,
}

impl Default for MdpConfig {
    fn default() -> MdpConfig {
        MdpConfig {
            max_nodes: crate::molgraph::DEFAULT_MAX_NODES,
            max_edges: crate::molgraph::DEFAULT_MAX_EDGES,
            max_traj_len: 40,
            allowed_elements: ALL_ELEMENTS.to_vec(),
            allowed_bond_orders: vec![BondOrder::Single, BondOrder::Double, BondOrder::Triple],
            enable_node_attrs: true,
        }
    }
}

/// A construction state: the partial graph plus the immutable scaffold
/// prefix. Seed nodes/edges always occupy the lowest indices, and backward
/// moves never touch them.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct State {
    pub graph: MolGraph,
    pub frozen_nodes: usize,
    pub frozen_edges: usize,
    /// Set once Stop is applied; no further forward actions exist.
    pub stopped: bool,
}

impl State {
    pub fn empty() -> State {
        State { graph: MolGraph::new(), frozen_nodes: 0, frozen_edges: 0, stopped: false }
    }

    /// Seeds a trajectory with a finished scaffold whose atoms and bonds are
    /// immutable for the rest of the episode.
    pub fn from_scaffold(graph: MolGraph, cfg: &MdpConfig) -> Result<State, MdpError> {
        if graph.is_empty() {
            return Err(MdpError::BadSeed("scaffold is empty".into()));
        }
        if !graph.all_orders_set() {
            return Err(MdpError::BadSeed("scaffold has unset bond orders".into()));
        }
        graph
            .validate(cfg.max_nodes, cfg.max_edges)
            .map_err(|e| MdpError::BadSeed(e.to_string()))?;
        Ok(State {
            frozen_nodes: graph.node_count(),
            frozen_edges: graph.edge_count(),
            graph,
            stopped: false,
        })
    }

    pub fn is_seed(&self) -> bool {
        self.graph.node_count() == self.frozen_nodes && self.graph.edge_count() == self.frozen_edges
    }

    /// Valence slack at `node` against its largest allowed valence, after
    /// reserving one unit per unset incident edge. Largest (not smallest
    /// feasible) keeps expanded-valence S and P constructible; for
    /// single-valence elements this equals implicit hydrogens minus unset
    /// edges.
    fn spare(&self, node: usize) -> u32 {
        let cap = self.graph.atom(node).element.max_valence();
        let used = self.graph.explicit_valence(node) + self.graph.unset_edge_count(node);
        debug_assert!(used <= cap, "reachable states never over-reserve valence");
        cap.saturating_sub(used)
    }

    fn unset_edges(&self) -> usize {
        self.graph.edges().iter().filter(|e| !e.order.is_set()).count()
    }

    /// Fewest actions (including Stop) that still finish this state.
    pub fn min_actions_to_stop(&self) -> usize {
        if self.graph.is_empty() {
            2 // AddNode, Stop
        } else {
            self.unset_edges() + 1
        }
    }
}

/// Legal constructive actions (Stop first, then AddNode, AddEdge,
/// SetEdgeAttr, SetNodeAttr in index order). `steps_taken` is the number of
/// actions already applied this episode; it drives the length budget.
pub fn forward_actions(
    s: &State,
    steps_taken: usize,
    cfg: &MdpConfig,
) -> Result<Vec<Action>, MdpError> {
    if s.stopped {
        return Err(MdpError::Stopped);
    }
    let g = &s.graph;
    let n = g.node_count();
    let budget = cfg.max_traj_len.saturating_sub(steps_taken);
    let unset = s.unset_edges();
    let mut out = Vec::new();

    if n > 0 && g.all_orders_set() {
        out.push(Action::Stop);
    }

    // Growing actions leave `unset + 2` mandatory actions behind them
    // (fresh unset edge + Stop); attribute sets leave `unset + 1`.
    let can_grow = 1 + unset + 2 <= budget;

    if n == 0 {
        // The root node brings no edge: AddNode + Stop is the whole cost.
        if 2 <= budget {
            for &element in &cfg.allowed_elements {
                out.push(Action::AddNode { attach: None, element });
            }
        }
        return Ok(out);
    }

    if can_grow && n < cfg.max_nodes && g.edge_count() < cfg.max_edges {
        for attach in 0..n {
            if s.spare(attach) >= 1 {
                for &element in &cfg.allowed_elements {
                    out.push(Action::AddNode { attach: Some(attach), element });
                }
            }
        }
    }

    if can_grow && g.edge_count() < cfg.max_edges {
        for u in 0..n {
            if s.spare(u) == 0 {
                continue;
            }
            for v in u + 1..n {
                if s.spare(v) >= 1 && g.edge_between(u, v).is_none() {
                    out.push(Action::AddEdge { u, v });
                }
            }
        }
    }

    // Setting an edge order consumes one reserved unit and frees the rest:
    // order k fits when implicit_h - (unset_incident - 1) >= k at both ends.
    for (idx, e) in g.edges().iter().enumerate() {
        if e.order.is_set() {
            continue;
        }
        let cap = s.spare(e.a).min(s.spare(e.b)) + 1;
        for &order in &cfg.allowed_bond_orders {
            if order.valence_units() <= cap {
                out.push(Action::SetEdgeAttr { edge: idx, order });
            }
        }
    }

    if cfg.enable_node_attrs && 1 + unset + 1 <= budget {
        for node in s.frozen_nodes..n {
            if g.atom(node).chirality == Chirality::None {
                out.push(Action::SetNodeAttr { node, tag: Chirality::R });
                out.push(Action::SetNodeAttr { node, tag: Chirality::S });
            }
        }
    }

    Ok(out)
}

/// Legal deconstruction moves (DeleteNode, DeleteEdge, UnsetEdgeAttr,
/// UnsetNodeAttr in index order). Each is the exact inverse of one forward
/// action at the predecessor state.
pub fn backward_actions(s: &State, cfg: &MdpConfig) -> Result<Vec<Action>, MdpError> {
    let g = &s.graph;
    if g.is_empty() {
        return Err(MdpError::EmptyState);
    }
    if s.frozen_nodes > 0 && s.is_seed() {
        return Err(MdpError::AtSeed);
    }
    let _ = cfg;
    let mut out = Vec::new();

    if g.node_count() == 1 && g.edge_count() == 0 && s.frozen_nodes == 0 {
        if g.atom(0).chirality == Chirality::None {
            out.push(Action::DeleteNode { node: 0 });
        }
    }

    for (idx, e) in g.edges().iter().enumerate() {
        if idx < s.frozen_edges || e.order.is_set() {
            continue;
        }
        if let Some(dangling) = dangling_endpoint(s, idx) {
            // Inverse of AddNode: the stranded endpoint goes too.
            if dangling >= s.frozen_nodes && g.atom(dangling).chirality == Chirality::None {
                out.push(Action::DeleteEdge { edge: idx });
            }
        } else if g.connected_without_edge(idx) {
            // Inverse of AddEdge: a cycle edge.
            out.push(Action::DeleteEdge { edge: idx });
        }
    }

    for (idx, e) in g.edges().iter().enumerate() {
        if idx >= s.frozen_edges && e.order.is_set() {
            out.push(Action::UnsetEdgeAttr { edge: idx });
        }
    }

    for node in s.frozen_nodes..g.node_count() {
        if g.atom(node).chirality != Chirality::None {
            out.push(Action::UnsetNodeAttr { node });
        }
    }

    Ok(out)
}

/// The node removed together with `edge` when deleting it, if any: the
/// unique degree-one endpoint, or the higher-index one when both endpoints
/// are degree one (two-node graphs).
fn dangling_endpoint(s: &State, edge: usize) -> Option<usize> {
    let e = s.graph.edge(edge);
    let da = s.graph.degree(e.a);
    let db = s.graph.degree(e.b);
    match (da == 1, db == 1) {
        (true, true) => Some(e.a.max(e.b)),
        (true, false) => Some(e.a),
        (false, true) => Some(e.b),
        (false, false) => None,
    }
}

/// Applies a legal action. Panics are avoided: illegal applications are a
/// programming error and return `IllegalAction`.
pub fn apply(s: &State, a: &Action) -> Result<State, MdpError> {
    let mut next = s.clone();
    let g = &mut next.graph;
    match *a {
        Action::AddNode { attach: None, element } => {
            if !g.is_empty() || s.stopped {
                return Err(MdpError::IllegalAction(*a));
            }
            g.add_node(element);
        }
        Action::AddNode { attach: Some(u), element } => {
            if s.stopped || u >= g.node_count() {
                return Err(MdpError::IllegalAction(*a));
            }
            let v = g.add_node(element);
            g.add_edge(u, v);
        }
        Action::AddEdge { u, v } => {
            if s.stopped || u >= v || v >= g.node_count() || g.edge_between(u, v).is_some() {
                return Err(MdpError::IllegalAction(*a));
            }
            g.add_edge(u, v);
        }
        Action::SetNodeAttr { node, tag } => {
            if s.stopped
                || tag == Chirality::None
                || node >= g.node_count()
                || g.atom(node).chirality != Chirality::None
            {
                return Err(MdpError::IllegalAction(*a));
            }
            g.set_chirality(node, tag);
        }
        Action::SetEdgeAttr { edge, order } => {
            if s.stopped
                || !order.is_set()
                || edge >= g.edge_count()
                || g.edge(edge).order.is_set()
            {
                return Err(MdpError::IllegalAction(*a));
            }
            g.set_edge_order(edge, order);
        }
        Action::Stop => {
            if s.stopped || g.is_empty() || !g.all_orders_set() {
                return Err(MdpError::IllegalAction(*a));
            }
            next.stopped = true;
        }
        Action::DeleteNode { node } => {
            if g.node_count() != 1 || node != 0 || g.edge_count() != 0 {
                return Err(MdpError::IllegalAction(*a));
            }
            g.remove_node(0);
        }
        Action::DeleteEdge { edge } => {
            if edge >= g.edge_count() || g.edge(edge).order.is_set() {
                return Err(MdpError::IllegalAction(*a));
            }
            match dangling_endpoint(s, edge) {
                Some(node) => {
                    g.remove_edge(edge);
                    g.remove_node(node);
                }
                None => {
                    if !g.connected_without_edge(edge) {
                        return Err(MdpError::IllegalAction(*a));
                    }
                    g.remove_edge(edge);
                }
            }
        }
        Action::UnsetNodeAttr { node } => {
            if node >= g.node_count() || g.atom(node).chirality == Chirality::None {
                return Err(MdpError::IllegalAction(*a));
            }
            g.set_chirality(node, Chirality::None);
        }
        Action::UnsetEdgeAttr { edge } => {
            if edge >= g.edge_count() || !g.edge(edge).order.is_set() {
                return Err(MdpError::IllegalAction(*a));
            }
            g.set_edge_order(edge, BondOrder::Unset);
        }
    }
    Ok(next)
}

/// The backward action that undoes `a` at the state `apply(s, a)` produced.
/// Forward actions append, so inverses are always delete-last forms.
pub fn inverse_of_applied(s: &State, a: &Action) -> Option<Action> {
    match *a {
        Action::AddNode { attach: None, .. } => Some(Action::DeleteNode { node: 0 }),
        Action::AddNode { attach: Some(_), .. } => {
            Some(Action::DeleteEdge { edge: s.graph.edge_count() })
        }
        Action::AddEdge { .. } => Some(Action::DeleteEdge { edge: s.graph.edge_count() }),
        Action::SetNodeAttr { node, .. } => Some(Action::UnsetNodeAttr { node }),
        Action::SetEdgeAttr { edge, .. } => Some(Action::UnsetEdgeAttr { edge }),
        Action::Stop => None,
        // Backward actions have no backward inverse here.
        _ => None,
    }
}

/// A forward construction episode: `states[0]` is the seed, every later
/// state follows by `apply`, and terminal episodes end with Stop.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub actions: Vec<Action>,
    pub terminal: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn final_graph(&self) -> &MolGraph {
        &self.states.last().expect("trajectories hold at least the seed state").graph
    }
}

/// Replays actions from `s0`, checking legality against the masks.
pub fn replay(s0: &State, actions: &[Action], cfg: &MdpConfig) -> Result<Trajectory, MdpError> {
    let mut states = vec![s0.clone()];
    let mut terminal = false;
    for (t, a) in actions.iter().enumerate() {
        let s = states.last().unwrap();
        let legal = forward_actions(s, t, cfg)?;
        if !legal.contains(a) {
            return Err(MdpError::IllegalAction(*a));
        }
        let next = apply(s, a)?;
        terminal = *a == Action::Stop;
        states.push(next);
    }
    Ok(Trajectory { states, actions: actions.to_vec(), terminal })
}

/// One recorded deconstruction step, in the coordinates of the original
/// molecule (stable across deletions).
enum BackStep {
    /// DeleteEdge; `removed_node` set when the stranded endpoint went too.
    Edge { edge: usize, removed_node: Option<usize> },
    Node { node: usize },
    UnsetEdge { edge: usize },
    UnsetNode { node: usize },
}

/// Bookkeeping overlay for deconstruction: flags over the original molecule
/// plus maps to the compacted live state.
struct Overlay<'x> {
    x: &'x MolGraph,
    node_alive: Vec<bool>,
    edge_alive: Vec<bool>,
    order_set: Vec<bool>,
    chirality_set: Vec<bool>,
    frozen_nodes: usize,
    frozen_edges: usize,
}

impl<'x> Overlay<'x> {
    fn new(x: &'x MolGraph, frozen_nodes: usize, frozen_edges: usize) -> Overlay<'x> {
        Overlay {
            x,
            node_alive: vec![true; x.node_count()],
            edge_alive: vec![true; x.edge_count()],
            order_set: vec![true; x.edge_count()],
            chirality_set: (0..x.node_count())
                .map(|v| x.atom(v).chirality != Chirality::None)
                .collect(),
            frozen_nodes,
            frozen_edges,
        }
    }

    /// Builds the compacted state plus new-index -> original-index maps.
    fn compact(&self) -> (State, Vec<usize>, Vec<usize>) {
        let mut node_map = Vec::new(); // new -> old
        let mut g = MolGraph::new();
        let mut old_to_new = vec![usize::MAX; self.x.node_count()];
        for (old, &alive) in self.node_alive.iter().enumerate() {
            if alive {
                old_to_new[old] = g.add_node(self.x.atom(old).element);
                if self.chirality_set[old] {
                    g.set_chirality(old_to_new[old], self.x.atom(old).chirality);
                }
                node_map.push(old);
            }
        }
        let mut edge_map = Vec::new();
        for (old, &alive) in self.edge_alive.iter().enumerate() {
            if alive {
                let e = self.x.edge(old);
                let idx = g.add_edge(old_to_new[e.a], old_to_new[e.b]);
                if self.order_set[old] {
                    g.set_edge_order(idx, e.order);
                }
                edge_map.push(old);
            }
        }
        let state = State {
            graph: g,
            frozen_nodes: self.frozen_nodes,
            frozen_edges: self.frozen_edges,
            stopped: false,
        };
        (state, node_map, edge_map)
    }

    fn done(&self) -> bool {
        let live_nodes = self.node_alive.iter().filter(|&&a| a).count();
        let live_edges = self.edge_alive.iter().filter(|&&a| a).count();
        live_nodes == self.frozen_nodes && live_edges == self.frozen_edges
    }
}

/// Chooses one backward action index given the compacted state and its legal
/// backward actions; implementations range from uniform-random to the
/// learned backward policy.
pub trait BackwardChooser {
    fn choose(&mut self, state: &State, actions: &[Action]) -> usize;
}

impl<F: FnMut(&State, &[Action]) -> usize> BackwardChooser for F {
    fn choose(&mut self, state: &State, actions: &[Action]) -> usize {
        self(state, actions)
    }
}

/// Deconstructs a finished molecule into a forward trajectory: backward
/// actions are sampled until the seed remains, then the path is reversed
/// with indices remapped to forward (append-order) coordinates.
///
/// `max_back_steps` restarts the walk when one attempt exceeds the cap;
/// `None` disables the cap (deconstruction to the seed always terminates).
pub fn deconstruct(
    x: &MolGraph,
    frozen: Option<(usize, usize)>,
    cfg: &MdpConfig,
    chooser: &mut dyn BackwardChooser,
    max_back_steps: Option<usize>,
) -> Result<Trajectory, MdpError> {
    if x.node_count() > cfg.max_nodes || x.edge_count() > cfg.max_edges {
        return Err(MdpError::OutsideCaps(format!(
            "{} nodes / {} edges vs caps {} / {}",
            x.node_count(),
            x.edge_count(),
            cfg.max_nodes,
            cfg.max_edges
        )));
    }
    let (frozen_nodes, frozen_edges) = frozen.unwrap_or((0, 0));
    let min_len = minimal_trajectory_len(x, frozen_nodes, frozen_edges);
    if min_len > cfg.max_traj_len {
        return Err(MdpError::OutsideCaps(format!(
            "needs at least {min_len} actions vs max_traj_len {}",
            cfg.max_traj_len
        )));
    }

    let attempts = if max_back_steps.is_some() { 64 } else { 1 };
    for _ in 0..attempts {
        let mut overlay = Overlay::new(x, frozen_nodes, frozen_edges);
        let mut steps: Vec<BackStep> = Vec::new();
        let mut exceeded = false;
        while !overlay.done() {
            if let Some(cap) = max_back_steps {
                if steps.len() >= cap {
                    exceeded = true;
                    break;
                }
            }
            let (state, node_map, edge_map) = overlay.compact();
            let actions = backward_actions(&state, cfg)?;
            debug_assert!(!actions.is_empty(), "deconstruction can always proceed");
            let chosen = actions[chooser.choose(&state, &actions)];
            match chosen {
                Action::DeleteNode { node } => {
                    let old = node_map[node];
                    overlay.node_alive[old] = false;
                    steps.push(BackStep::Node { node: old });
                }
                Action::DeleteEdge { edge } => {
                    let old_edge = edge_map[edge];
                    let removed =
                        dangling_endpoint(&state, edge).map(|v| node_map[v]);
                    overlay.edge_alive[old_edge] = false;
                    if let Some(old_node) = removed {
                        overlay.node_alive[old_node] = false;
                    }
                    steps.push(BackStep::Edge { edge: old_edge, removed_node: removed });
                }
                Action::UnsetEdgeAttr { edge } => {
                    let old = edge_map[edge];
                    overlay.order_set[old] = false;
                    steps.push(BackStep::UnsetEdge { edge: old });
                }
                Action::UnsetNodeAttr { node } => {
                    let old = node_map[node];
                    overlay.chirality_set[old] = false;
                    steps.push(BackStep::UnsetNode { node: old });
                }
                other => unreachable!("backward_actions only emits deconstruction moves: {other:?}"),
            }
        }
        if exceeded {
            continue;
        }
        return reverse_into_forward(x, frozen_nodes, frozen_edges, &steps, cfg);
    }
    Err(MdpError::BackStepsExceeded(max_back_steps.unwrap_or(0)))
}

/// Construction length of `x`: every trajectory to it takes exactly this
/// many actions. Each new edge costs two (a grow action and a SetEdgeAttr),
/// each chirality tag one, Stop one, plus the initial AddNode from empty.
pub fn minimal_trajectory_len(x: &MolGraph, frozen_nodes: usize, frozen_edges: usize) -> usize {
    let new_edges = x.edge_count() - frozen_edges;
    let tags = (frozen_nodes..x.node_count())
        .filter(|&v| x.atom(v).chirality != Chirality::None)
        .count();
    let root = usize::from(frozen_nodes == 0);
    2 * new_edges + tags + root + 1
}

/// Rebuilds the forward trajectory from recorded backward steps: creation
/// order is the reverse of deletion order, with original-molecule indices
/// remapped to forward (append-order) coordinates.
fn reverse_into_forward(
    x: &MolGraph,
    frozen_nodes: usize,
    frozen_edges: usize,
    steps: &[BackStep],
    cfg: &MdpConfig,
) -> Result<Trajectory, MdpError> {
    let s0 = if frozen_nodes > 0 {
        let mut g = MolGraph::new();
        for v in 0..frozen_nodes {
            g.add_node(x.atom(v).element);
            g.set_chirality(v, x.atom(v).chirality);
        }
        for e in 0..frozen_edges {
            let ed = x.edge(e);
            let idx = g.add_edge(ed.a, ed.b);
            g.set_edge_order(idx, ed.order);
        }
        State { graph: g, frozen_nodes, frozen_edges, stopped: false }
    } else {
        State::empty()
    };

    let mut fwd_node = vec![usize::MAX; x.node_count()];
    let mut fwd_edge = vec![usize::MAX; x.edge_count()];
    for v in 0..frozen_nodes {
        fwd_node[v] = v;
    }
    for e in 0..frozen_edges {
        fwd_edge[e] = e;
    }
    let mut next_node = frozen_nodes;
    let mut next_edge = frozen_edges;
    let mut actions = Vec::with_capacity(steps.len() + 1);
    for step in steps.iter().rev() {
        match *step {
            BackStep::Node { node } => {
                actions.push(Action::AddNode { attach: None, element: x.atom(node).element });
                fwd_node[node] = next_node;
                next_node += 1;
            }
            BackStep::Edge { edge, removed_node } => {
                let e = x.edge(edge);
                match removed_node {
                    Some(w) => {
                        let anchor = if e.a == w { e.b } else { e.a };
                        actions.push(Action::AddNode {
                            attach: Some(fwd_node[anchor]),
                            element: x.atom(w).element,
                        });
                        fwd_node[w] = next_node;
                        next_node += 1;
                    }
                    None => {
                        let (u, v) = (fwd_node[e.a], fwd_node[e.b]);
                        let (u, v) = if u < v { (u, v) } else { (v, u) };
                        actions.push(Action::AddEdge { u, v });
                    }
                }
                fwd_edge[edge] = next_edge;
                next_edge += 1;
            }
            BackStep::UnsetEdge { edge } => {
                actions.push(Action::SetEdgeAttr {
                    edge: fwd_edge[edge],
                    order: x.edge(edge).order,
                });
            }
            BackStep::UnsetNode { node } => {
                actions.push(Action::SetNodeAttr {
                    node: fwd_node[node],
                    tag: x.atom(node).chirality,
                });
            }
        }
    }
    actions.push(Action::Stop);
    replay(&s0, &actions, cfg)
}
