//! The graph policy: a message-passing network over partial molecular graphs
//! producing masked log-probabilities for every legal MDP action, plus a
//! conditioning-dependent logZ head.
//!
//! Layout per layer: an additive-aggregation convolution whose output is
//! concatenated to the layer input, feeding a graph attention step. The
//! conditioning encoding enters through a global virtual node connected to
//! every atom. Action logits come from small MLP heads over the final node
//! embeddings: AddNode splits into attach + element logits (the empty-graph
//! root anchors on the virtual node), edge actions use the symmetric sum of
//! endpoint embeddings, and Stop reads the pooled graph embedding. Backward
//! actions get their own heads on the shared trunk.
//!
//! Only legal actions (as enumerated by the MDP) enter the tape: illegal
//! ones are never scored, so they carry no gradient and -inf log-probability
//! by construction.

use crate::autodiff::{Tape, Tensor, Var};
use crate::mdp::{backward_actions, forward_actions, Action, MdpConfig, MdpError, State};
use crate::molgraph::ALL_ELEMENTS;
use crate::reward::ConditioningContext;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

/// Edge-type channels: four bond orders, virtual-node links, self-loops.
const EDGE_TYPES: usize = 6;
const EDGE_TYPE_VIRTUAL: usize = 4;
const EDGE_TYPE_SELF: usize = 5;
/// Degree and hydrogen-count embeddings clamp at this table size.
const MAX_DEGREE_EMB: usize = 8;
const MAX_HCOUNT_EMB: usize = 8;

const CHECKPOINT_MAGIC: &[u8; 4] = b"MGFN";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("bad policy config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("trajectory step {step}: action not legal at its state")]
    CorruptTrajectory { step: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub num_layers: usize,
    pub emb_dim: usize,
    pub num_heads: usize,
    pub num_mlp_layers: usize,
    /// Hidden width of head MLPs as a multiple of emb_dim.
    pub i2h_width: usize,
    /// Length of the conditioning encoding vector.
    pub cond_dim: usize,
    pub leaky_slope: f64,
}

impl PolicyConfig {
    /// Desk-scale default: small enough for brute-force verification.
    pub fn desk(cond_dim: usize) -> PolicyConfig {
        PolicyConfig {
            num_layers: 3,
            emb_dim: 32,
            num_heads: 1,
            num_mlp_layers: 2,
            i2h_width: 1,
            cond_dim,
            leaky_slope: 0.01,
        }
    }

    /// Paper-scale settings; not an acceptance target.
    pub fn paper(cond_dim: usize) -> PolicyConfig {
        PolicyConfig {
            num_layers: 8,
            emb_dim: 128,
            num_heads: 2,
            num_mlp_layers: 4,
            i2h_width: 1,
            cond_dim,
            leaky_slope: 0.01,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.emb_dim == 0 || self.num_layers == 0 || self.num_mlp_layers == 0 {
            return Err(PolicyError::BadConfig("sizes must be positive".into()));
        }
        if self.emb_dim % self.num_heads != 0 {
            return Err(PolicyError::BadConfig(format!(
                "emb_dim {} not divisible by num_heads {}",
                self.emb_dim, self.num_heads
            )));
        }
        Ok(())
    }

    /// Stable hash over everything that determines tensor shapes; guards
    /// checkpoint loads against mismatched configs.
    pub fn shape_hash(&self) -> u64 {
        let s = format!(
            "v1 {} {} {} {} {} {} {}",
            self.num_layers,
            self.emb_dim,
            self.num_heads,
            self.num_mlp_layers,
            self.i2h_width,
            self.cond_dim,
            self.leaky_slope,
        );
        fnv1a_bytes(s.as_bytes())
    }
}

fn fnv1a_bytes(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Named parameter tensors in a fixed creation order.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub config: PolicyConfig,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, usize>,
}

/// Declares every tensor (name, rows, cols) for a config, in order.
fn tensor_layout(cfg: &PolicyConfig) -> Vec<(String, usize, usize)> {
    let d = cfg.emb_dim;
    let dh = d / cfg.num_heads;
    let hidden = d * cfg.i2h_width;
    let mut out = Vec::new();
    out.push(("emb.element".into(), ALL_ELEMENTS.len(), d));
    out.push(("emb.chirality".into(), 3, d));
    out.push(("emb.degree".into(), MAX_DEGREE_EMB, d));
    out.push(("emb.hcount".into(), MAX_HCOUNT_EMB, d));
    out.push(("emb.virtual".into(), 1, d));
    out.push(("cond.proj".into(), cfg.cond_dim, d));
    out.push(("cond.bias".into(), 1, d));
    for l in 0..cfg.num_layers {
        out.push((format!("l{l}.conv.w"), d, d));
        out.push((format!("l{l}.conv.self"), d, d));
        out.push((format!("l{l}.conv.b"), 1, d));
        out.push((format!("l{l}.conv.edge"), EDGE_TYPES, d));
        for h in 0..cfg.num_heads {
            out.push((format!("l{l}.att{h}.w"), 2 * d, dh));
            out.push((format!("l{l}.att{h}.a_src"), dh, 1));
            out.push((format!("l{l}.att{h}.a_dst"), dh, 1));
            out.push((format!("l{l}.att{h}.a_edge"), dh, 1));
            out.push((format!("l{l}.att{h}.edge"), EDGE_TYPES, dh));
        }
    }
    let heads: &[(&str, usize, usize)] = &[
        ("head.stop", 2 * d, 1),
        ("head.attach", d, 1),
        ("head.element", d, ALL_ELEMENTS.len()),
        ("head.edge_add", d, 1),
        ("head.set_order", d, 3),
        ("head.set_chir", d, 2),
        ("head.del_node", d, 1),
        ("head.del_edge", d, 1),
        ("head.unset_order", d, 1),
        ("head.unset_chir", d, 1),
        ("logz", cfg.cond_dim, 1),
    ];
    for &(name, in_dim, out_dim) in heads {
        let mut cur = in_dim;
        for i in 0..cfg.num_mlp_layers {
            let next = if i + 1 == cfg.num_mlp_layers { out_dim } else { hidden };
            out.push((format!("{name}.w{i}"), cur, next));
            out.push((format!("{name}.b{i}"), 1, next));
            cur = next;
        }
    }
    out
}

impl PolicyParams {
    /// Deterministic initialization: Glorot weights, zero biases and
    /// embedding-free rows, driven entirely by `seed`.
    pub fn init(config: PolicyConfig, seed: u64) -> Result<PolicyParams, PolicyError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        let mut index = BTreeMap::new();
        for (name, rows, cols) in tensor_layout(&config) {
            // Biases (last name segment starting with 'b') start at zero.
            let is_bias = name.rsplit('.').next().is_some_and(|s| s.starts_with('b'));
            let t = if is_bias {
                Tensor::zeros(rows, cols)
            } else {
                Tensor::glorot(rows, cols, &mut rng)
            };
            index.insert(name.clone(), tensors.len());
            names.push(name);
            tensors.push(t);
        }
        Ok(PolicyParams { config, names, tensors, index })
    }

    /// All-zero parameters: the policy becomes uniform over legal actions.
    pub fn zeros(config: PolicyConfig) -> Result<PolicyParams, PolicyError> {
        config.validate()?;
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        let mut index = BTreeMap::new();
        for (name, rows, cols) in tensor_layout(&config) {
            index.insert(name.clone(), tensors.len());
            names.push(name);
            tensors.push(Tensor::zeros(rows, cols));
        }
        Ok(PolicyParams { config, names, tensors, index })
    }

    pub fn num_tensors(&self) -> usize {
        self.tensors.len()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = *self.index.get(name)?;
        Some(&mut self.tensors[i])
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Register every tensor on a tape. Gradients for tensor `i` end up at
    /// `grads[binding.var(i).index]` after `tape.backward`.
    pub fn bind(&self, tape: &mut Tape) -> Binding {
        let vars = self.tensors.iter().map(|t| tape.input(t.clone())).collect();
        Binding { vars, index: self.index.clone() }
    }

    /// Add N(0, sigma) noise to the logZ head, used when recalibrating the
    /// partition estimate at the start of finetuning.
    pub fn recalibrate_log_z(&mut self, sigma: f64, rng: &mut impl Rng) {
        if sigma == 0.0 {
            return;
        }
        let normal = rand_distr::Normal::new(0.0, sigma).expect("sigma must be nonnegative");
        for (name, &i) in self.index.clone().iter() {
            if name.starts_with("logz.") {
                for v in self.tensors[i].data.iter_mut() {
                    *v += rand_distr::Distribution::sample(&normal, rng);
                }
            }
        }
    }

    /// Versioned binary checkpoint: magic, version, config shape hash, then
    /// named tensors as little-endian f32.
    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.config.shape_hash().to_le_bytes());
        buf.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in self.names.iter().zip(&self.tensors) {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(t.rows as u32).to_le_bytes());
            buf.extend_from_slice(&(t.cols as u32).to_le_bytes());
            for &v in &t.data {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    /// Load a checkpoint saved for `config`. A shape-hash mismatch is an
    /// error unless `force` is set (then shapes are still verified).
    pub fn load(path: &Path, config: PolicyConfig, force: bool) -> Result<PolicyParams, PolicyError> {
        config.validate()?;
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8], PolicyError> {
            if *pos + n > bytes.len() {
                return Err(PolicyError::Checkpoint("truncated file".into()));
            }
            let s = &bytes[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        if take(&mut pos, 4)? != CHECKPOINT_MAGIC {
            return Err(PolicyError::Checkpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(PolicyError::Checkpoint(format!("unsupported version {version}")));
        }
        let hash = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
        if hash != config.shape_hash() && !force {
            return Err(PolicyError::Checkpoint(
                "config hash mismatch (pass force to override)".into(),
            ));
        }
        let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut loaded: BTreeMap<String, Tensor> = BTreeMap::new();
        for _ in 0..count {
            let name_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(take(&mut pos, name_len)?.to_vec())
                .map_err(|_| PolicyError::Checkpoint("bad tensor name".into()))?;
            let rows = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
            let cols = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
            let raw = take(&mut pos, rows * cols * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            loaded.insert(name, Tensor::from_vec(rows, cols, data));
        }
        let mut params = PolicyParams::zeros(config)?;
        for (name, &i) in params.index.clone().iter() {
            let t = loaded
                .remove(name)
                .ok_or_else(|| PolicyError::Checkpoint(format!("missing tensor {name}")))?;
            if t.rows != params.tensors[i].rows || t.cols != params.tensors[i].cols {
                return Err(PolicyError::Checkpoint(format!(
                    "tensor {name} has shape {}x{} but config wants {}x{}",
                    t.rows, t.cols, params.tensors[i].rows, params.tensors[i].cols
                )));
            }
            params.tensors[i] = t;
        }
        if !loaded.is_empty() {
            return Err(PolicyError::Checkpoint(format!("{} extra tensors in file", loaded.len())));
        }
        Ok(params)
    }
}

/// Tape handles for one bound parameter set.
pub struct Binding {
    vars: Vec<Var>,
    index: BTreeMap<String, usize>,
}

impl Binding {
    pub fn get(&self, name: &str) -> Var {
        self.vars[*self.index.get(name).unwrap_or_else(|| panic!("unknown tensor {name}"))]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Policy evaluation at one state: the legal actions in MDP order, their
/// log-probabilities (1 x K on the tape), and the pooled graph embedding.
pub struct PolicyOutput {
    pub actions: Vec<Action>,
    pub log_probs: Var,
    pub graph_emb: Var,
}

impl PolicyOutput {
    /// Log-probability of one action; None if it is not legal here.
    pub fn log_prob_of_action(&self, tape: &Tape, a: &Action) -> Option<f64> {
        let i = self.actions.iter().position(|x| x == a)?;
        Some(tape.value(self.log_probs).data[i])
    }
}

fn apply_mlp(tape: &mut Tape, bound: &Binding, prefix: &str, x: Var, layers: usize, slope: f64) -> Var {
    let mut h = x;
    for i in 0..layers {
        let w = bound.get(&format!("{prefix}.w{i}"));
        let b = bound.get(&format!("{prefix}.b{i}"));
        h = tape.matmul(h, w);
        h = tape.add_row(h, b);
        if i + 1 < layers {
            h = tape.leaky_relu(h, slope);
        }
    }
    h
}

/// Directed message edges of a state: bond edges both ways, virtual-node
/// links both ways, one self-loop per node (virtual included).
fn message_edges(s: &State) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let n = s.graph.node_count();
    let virt = n;
    let mut src = Vec::new();
    let mut dst = Vec::new();
    let mut typ = Vec::new();
    for e in s.graph.edges() {
        let t = e.order.index();
        src.push(e.a);
        dst.push(e.b);
        typ.push(t);
        src.push(e.b);
        dst.push(e.a);
        typ.push(t);
    }
    for u in 0..n {
        src.push(virt);
        dst.push(u);
        typ.push(EDGE_TYPE_VIRTUAL);
        src.push(u);
        dst.push(virt);
        typ.push(EDGE_TYPE_VIRTUAL);
    }
    for u in 0..=n {
        src.push(u);
        dst.push(u);
        typ.push(EDGE_TYPE_SELF);
    }
    (src, dst, typ)
}

/// Node embeddings after all message-passing layers: (n+1) x d, the last row
/// being the virtual node.
fn encode_graph(
    tape: &mut Tape,
    bound: &Binding,
    s: &State,
    ctx: &ConditioningContext,
    cfg: &PolicyConfig,
) -> Var {
    let n = s.graph.node_count();
    let slope = cfg.leaky_slope;

    // Input features: summed embedding lookups per atom.
    let elem_ids: Vec<usize> = s.graph.atoms().iter().map(|a| a.element.index()).collect();
    let chir_ids: Vec<usize> = s.graph.atoms().iter().map(|a| a.chirality.index()).collect();
    let deg_ids: Vec<usize> =
        (0..n).map(|u| s.graph.degree(u).min(MAX_DEGREE_EMB - 1)).collect();
    let h_ids: Vec<usize> = (0..n)
        .map(|u| s.graph.implicit_hydrogens(u).unwrap_or(0) as usize)
        .map(|h| h.min(MAX_HCOUNT_EMB - 1))
        .collect();

    let enc = tape.input(Tensor::row_vec(ctx.encoding.clone()));
    let cond_proj = bound.get("cond.proj");
    let cond_bias = bound.get("cond.bias");
    let virt_emb = bound.get("emb.virtual");
    let mut virt_row = tape.matmul(enc, cond_proj);
    virt_row = tape.add(virt_row, cond_bias);
    virt_row = tape.add(virt_row, virt_emb);

    let mut x = if n > 0 {
        let e = bound.get("emb.element");
        let c = bound.get("emb.chirality");
        let dg = bound.get("emb.degree");
        let hh = bound.get("emb.hcount");
        let xe = tape.gather_rows(e, &elem_ids);
        let xc = tape.gather_rows(c, &chir_ids);
        let xd = tape.gather_rows(dg, &deg_ids);
        let xh = tape.gather_rows(hh, &h_ids);
        let s1 = tape.add(xe, xc);
        let s2 = tape.add(xd, xh);
        let real = tape.add(s1, s2);
        tape.concat_rows(real, virt_row)
    } else {
        virt_row
    };

    let (src, dst, typ) = message_edges(s);
    let rows = n + 1;

    for l in 0..cfg.num_layers {
        // Additive-aggregation convolution.
        let wc = bound.get(&format!("l{l}.conv.w"));
        let wself = bound.get(&format!("l{l}.conv.self"));
        let bc = bound.get(&format!("l{l}.conv.b"));
        let etab = bound.get(&format!("l{l}.conv.edge"));
        let proj = tape.matmul(x, wc);
        let msg_h = tape.gather_rows(proj, &src);
        let msg_e = tape.gather_rows(etab, &typ);
        let msg = tape.add(msg_h, msg_e);
        let agg = tape.scatter_add_rows(msg, &dst, rows);
        let self_term = tape.matmul(x, wself);
        let conv = tape.add(agg, self_term);
        let conv = tape.add_row(conv, bc);
        let conv = tape.leaky_relu(conv, slope);

        // Conv output concatenated to the attention layer's input.
        let cat = tape.concat_cols(x, conv);

        let mut head_outs = Vec::with_capacity(cfg.num_heads);
        for hidx in 0..cfg.num_heads {
            let w = bound.get(&format!("l{l}.att{hidx}.w"));
            let a_src = bound.get(&format!("l{l}.att{hidx}.a_src"));
            let a_dst = bound.get(&format!("l{l}.att{hidx}.a_dst"));
            let a_edge = bound.get(&format!("l{l}.att{hidx}.a_edge"));
            let att_etab = bound.get(&format!("l{l}.att{hidx}.edge"));

            let z = tape.matmul(cat, w);
            let zs = tape.gather_rows(z, &src);
            let zd = tape.gather_rows(z, &dst);
            let ee = tape.gather_rows(att_etab, &typ);
            let ss = tape.matmul(zs, a_src);
            let sd = tape.matmul(zd, a_dst);
            let se = tape.matmul(ee, a_edge);
            let sum1 = tape.add(ss, sd);
            let score = tape.add(sum1, se);
            let score = tape.leaky_relu(score, 0.2);
            // Softmax over incoming edges per destination node. Shifting by
            // the global max is exact for the gradient and keeps exp tame.
            let shift = tape
                .value(score)
                .data
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            let shifted = tape.add_const(score, -shift);
            let es = tape.exp(shifted);
            let denom = tape.scatter_add_rows(es, &dst, rows);
            let dpg = tape.gather_rows(denom, &dst);
            let inv = tape.recip(dpg);
            let alpha = tape.mul(es, inv);
            let weighted = tape.mul_col(zs, alpha);
            let out = tape.scatter_add_rows(weighted, &dst, rows);
            head_outs.push(out);
        }
        let mut att = head_outs[0];
        for &h in &head_outs[1..] {
            att = tape.concat_cols(att, h);
        }
        x = tape.leaky_relu(att, slope);
    }
    x
}

/// Pooled graph embedding: virtual-node row next to the sum of atom rows.
fn pool_graph(tape: &mut Tape, h: Var, n: usize) -> Var {
    let virt = tape.row(h, n);
    let real_idx: Vec<usize> = (0..n).collect();
    let reals = tape.gather_rows(h, &real_idx);
    let pooled = tape.scatter_add_rows(reals, &vec![0; n], 1);
    tape.concat_cols(virt, pooled)
}

/// Evaluate the policy at one state. `steps_taken` feeds the MDP's budget
/// masking and is ignored in the backward direction.
pub fn forward(
    tape: &mut Tape,
    bound: &Binding,
    params: &PolicyParams,
    s: &State,
    steps_taken: usize,
    ctx: &ConditioningContext,
    mdp_cfg: &MdpConfig,
    direction: Direction,
) -> Result<PolicyOutput, PolicyError> {
    let actions = match direction {
        Direction::Forward => forward_actions(s, steps_taken, mdp_cfg)?,
        Direction::Backward => backward_actions(s, mdp_cfg)?,
    };
    if actions.is_empty() {
        return Err(PolicyError::Mdp(MdpError::IllegalAction(Action::Stop)));
    }
    let cfg = &params.config;
    let n = s.graph.node_count();
    let virt = n;
    let h = encode_graph(tape, bound, s, ctx, cfg);
    let graph_emb = pool_graph(tape, h, n);

    // Per-family logit sources, built lazily over exactly the rows the
    // legal actions need.
    let slope = cfg.leaky_slope;
    let mlp = |tape: &mut Tape, prefix: &str, x: Var| {
        apply_mlp(tape, bound, prefix, x, cfg.num_mlp_layers, slope)
    };

    // Anchor nodes for AddNode (virtual row anchors the root placement).
    let mut addnode_anchors: Vec<usize> = Vec::new();
    let mut addedge_pairs: Vec<(usize, usize)> = Vec::new();
    let mut order_edges: Vec<usize> = Vec::new();
    let mut chir_nodes: Vec<usize> = Vec::new();
    let mut del_nodes: Vec<usize> = Vec::new();
    let mut del_edges: Vec<usize> = Vec::new();
    let mut unset_edges: Vec<usize> = Vec::new();
    let mut unchir_nodes: Vec<usize> = Vec::new();
    for a in &actions {
        match a {
            Action::AddNode { attach, .. } => {
                let anchor = attach.unwrap_or(virt);
                if !addnode_anchors.contains(&anchor) {
                    addnode_anchors.push(anchor);
                }
            }
            Action::AddEdge { u, v } => addedge_pairs.push((*u, *v)),
            Action::SetEdgeAttr { edge, .. } => {
                if !order_edges.contains(edge) {
                    order_edges.push(*edge);
                }
            }
            Action::SetNodeAttr { node, .. } => {
                if !chir_nodes.contains(node) {
                    chir_nodes.push(*node);
                }
            }
            Action::Stop => {}
            Action::DeleteNode { node } => del_nodes.push(*node),
            Action::DeleteEdge { edge } => del_edges.push(*edge),
            Action::UnsetEdgeAttr { edge } => unset_edges.push(*edge),
            Action::UnsetNodeAttr { node } => unchir_nodes.push(*node),
        }
    }

    let pair_rows = |tape: &mut Tape, edges: &[usize]| -> Var {
        let us: Vec<usize> = edges.iter().map(|&e| s.graph.edge(e).a).collect();
        let vs: Vec<usize> = edges.iter().map(|&e| s.graph.edge(e).b).collect();
        let hu = tape.gather_rows(h, &us);
        let hv = tape.gather_rows(h, &vs);
        tape.add(hu, hv)
    };

    // Each entry: (block var, column count) with a map from action index to
    // (block id, flat offset).
    let mut blocks: Vec<Var> = Vec::new();
    let mut slot: Vec<(usize, usize)> = vec![(usize::MAX, 0); actions.len()];

    let mut stop_block = None;
    let mut addnode_block = None;
    let mut addedge_block = None;
    let mut setorder_block = None;
    let mut setchir_block = None;
    let mut delnode_block = None;
    let mut deledge_block = None;
    let mut unsetorder_block = None;
    let mut unsetchir_block = None;

    if actions.contains(&Action::Stop) {
        let v = mlp(tape, "head.stop", graph_emb);
        stop_block = Some(blocks.len());
        blocks.push(v);
    }
    if !addnode_anchors.is_empty() {
        let rows = tape.gather_rows(h, &addnode_anchors);
        let attach = mlp(tape, "head.attach", rows);
        let elems = mlp(tape, "head.element", rows);
        // K x 9 of attach+element sums; gathered per concrete action below.
        let ncols = ALL_ELEMENTS.len();
        let attach_b = {
            // Broadcast the attach column across element columns.
            let ones = tape.input(Tensor::from_vec(1, ncols, vec![1.0; ncols]));
            tape.matmul(attach, ones)
        };
        let joint = tape.add(attach_b, elems);
        addnode_block = Some(blocks.len());
        blocks.push(joint);
    }
    if !addedge_pairs.is_empty() {
        let us: Vec<usize> = addedge_pairs.iter().map(|p| p.0).collect();
        let vs: Vec<usize> = addedge_pairs.iter().map(|p| p.1).collect();
        let hu = tape.gather_rows(h, &us);
        let hv = tape.gather_rows(h, &vs);
        let rows = tape.add(hu, hv);
        let v = mlp(tape, "head.edge_add", rows);
        addedge_block = Some(blocks.len());
        blocks.push(v);
    }
    if !order_edges.is_empty() {
        let rows = pair_rows(tape, &order_edges);
        let v = mlp(tape, "head.set_order", rows);
        setorder_block = Some(blocks.len());
        blocks.push(v);
    }
    if !chir_nodes.is_empty() {
        let rows = tape.gather_rows(h, &chir_nodes);
        let v = mlp(tape, "head.set_chir", rows);
        setchir_block = Some(blocks.len());
        blocks.push(v);
    }
    if !del_nodes.is_empty() {
        let rows = tape.gather_rows(h, &del_nodes);
        let v = mlp(tape, "head.del_node", rows);
        delnode_block = Some(blocks.len());
        blocks.push(v);
    }
    if !del_edges.is_empty() {
        let rows = pair_rows(tape, &del_edges);
        let v = mlp(tape, "head.del_edge", rows);
        deledge_block = Some(blocks.len());
        blocks.push(v);
    }
    if !unset_edges.is_empty() {
        let rows = pair_rows(tape, &unset_edges);
        let v = mlp(tape, "head.unset_order", rows);
        unsetorder_block = Some(blocks.len());
        blocks.push(v);
    }
    if !unchir_nodes.is_empty() {
        let rows = tape.gather_rows(h, &unchir_nodes);
        let v = mlp(tape, "head.unset_chir", rows);
        unsetchir_block = Some(blocks.len());
        blocks.push(v);
    }

    // Map each action to its (block, row, col) source.
    for (i, a) in actions.iter().enumerate() {
        let (b, r, c) = match a {
            Action::Stop => (stop_block.unwrap(), 0, 0),
            Action::AddNode { attach, element } => {
                let anchor = attach.unwrap_or(virt);
                let row = addnode_anchors.iter().position(|&x| x == anchor).unwrap();
                (addnode_block.unwrap(), row, element.index())
            }
            Action::AddEdge { u, v } => {
                let row = addedge_pairs.iter().position(|p| p == &(*u, *v)).unwrap();
                (addedge_block.unwrap(), row, 0)
            }
            Action::SetEdgeAttr { edge, order } => {
                let row = order_edges.iter().position(|e| e == edge).unwrap();
                (setorder_block.unwrap(), row, order.valence_units() as usize - 1)
            }
            Action::SetNodeAttr { node, tag } => {
                let row = chir_nodes.iter().position(|x| x == node).unwrap();
                (setchir_block.unwrap(), row, tag.index() - 1)
            }
            Action::DeleteNode { node } => {
                let row = del_nodes.iter().position(|x| x == node).unwrap();
                (delnode_block.unwrap(), row, 0)
            }
            Action::DeleteEdge { edge } => {
                let row = del_edges.iter().position(|x| x == edge).unwrap();
                (deledge_block.unwrap(), row, 0)
            }
            Action::UnsetEdgeAttr { edge } => {
                let row = unset_edges.iter().position(|x| x == edge).unwrap();
                (unsetorder_block.unwrap(), row, 0)
            }
            Action::UnsetNodeAttr { node } => {
                let row = unchir_nodes.iter().position(|x| x == node).unwrap();
                (unsetchir_block.unwrap(), row, 0)
            }
        };
        slot[i] = (b, r * tape.value(blocks[b]).cols + c);
    }

    // Flatten every block to a row, concatenate, then pick logits in action
    // order and normalize.
    let mut flat_blocks = Vec::with_capacity(blocks.len());
    let mut block_starts = Vec::with_capacity(blocks.len());
    let mut total = 0usize;
    for &b in &blocks {
        let t = tape.value(b);
        let (rows, cols) = (t.rows, t.cols);
        let all: Vec<(usize, usize)> =
            (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).collect();
        let flat = tape.gather_elems(b, &all);
        block_starts.push(total);
        total += rows * cols;
        flat_blocks.push(flat);
    }
    let mut cat = flat_blocks[0];
    for &f in &flat_blocks[1..] {
        cat = tape.concat_cols(cat, f);
    }
    let picks: Vec<(usize, usize)> =
        slot.iter().map(|&(b, off)| (0, block_starts[b] + off)).collect();
    let logits = tape.gather_elems(cat, &picks);
    let log_probs = tape.log_softmax_1d(logits);

    Ok(PolicyOutput { actions, log_probs, graph_emb })
}

/// Sum of per-step log-probabilities along a trajectory, in either
/// direction. Forward walks (s_t, a_t); backward scores each non-Stop
/// action's inverse at the successor state (the stop transition is
/// deterministic backwards).
pub fn log_prob_of(
    tape: &mut Tape,
    bound: &Binding,
    params: &PolicyParams,
    traj: &crate::mdp::Trajectory,
    ctx: &ConditioningContext,
    mdp_cfg: &MdpConfig,
    direction: Direction,
) -> Result<Var, PolicyError> {
    let mut terms: Vec<Var> = Vec::new();
    for (t, a) in traj.actions.iter().enumerate() {
        match direction {
            Direction::Forward => {
                let out = forward(tape, bound, params, &traj.states[t], t, ctx, mdp_cfg, Direction::Forward)?;
                let i = out
                    .actions
                    .iter()
                    .position(|x| x == a)
                    .ok_or(PolicyError::CorruptTrajectory { step: t })?;
                terms.push(tape.gather_elems(out.log_probs, &[(0, i)]));
            }
            Direction::Backward => {
                if *a == Action::Stop {
                    continue;
                }
                let b = crate::mdp::inverse_of_applied(&traj.states[t], a)
                    .ok_or(PolicyError::CorruptTrajectory { step: t })?;
                let out = forward(
                    tape,
                    bound,
                    params,
                    &traj.states[t + 1],
                    0,
                    ctx,
                    mdp_cfg,
                    Direction::Backward,
                )?;
                let i = out
                    .actions
                    .iter()
                    .position(|x| *x == b)
                    .ok_or(PolicyError::CorruptTrajectory { step: t })?;
                terms.push(tape.gather_elems(out.log_probs, &[(0, i)]));
            }
        }
    }
    let mut acc = tape.scalar(0.0);
    for v in terms {
        acc = tape.add(acc, v);
    }
    Ok(acc)
}

/// Conditioning-dependent log-partition estimate.
pub fn log_z(tape: &mut Tape, bound: &Binding, params: &PolicyParams, ctx: &ConditioningContext) -> Var {
    let enc = tape.input(Tensor::row_vec(ctx.encoding.clone()));
    apply_mlp(tape, bound, "logz", enc, params.config.num_mlp_layers, params.config.leaky_slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{apply, replay};
    use crate::molgraph::{Chirality, Element};
    use rand::Rng;

    fn tiny_ctx(dim: usize) -> ConditioningContext {
        ConditioningContext { conditionals: Vec::new(), encoding: vec![0.25; dim] }
    }

    fn tiny_config() -> PolicyConfig {
        PolicyConfig {
            num_layers: 2,
            emb_dim: 8,
            num_heads: 2,
            num_mlp_layers: 2,
            i2h_width: 1,
            cond_dim: 6,
            leaky_slope: 0.01,
        }
    }

    fn random_state(seed: u64, steps: usize, cfg: &MdpConfig) -> (State, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = State::empty();
        let mut t = 0;
        for _ in 0..steps {
            let acts = forward_actions(&s, t, cfg).unwrap();
            let a = acts[rng.gen_range(0..acts.len())].clone();
            if a == Action::Stop {
                break;
            }
            s = apply(&s, &a).unwrap();
            t += 1;
        }
        (s, t)
    }

    #[test]
    fn zero_params_give_uniform_distribution() {
        let pcfg = tiny_config();
        let params = PolicyParams::zeros(pcfg).unwrap();
        let mdp_cfg = MdpConfig::default();
        let ctx = tiny_ctx(6);

        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let s = State::empty();
        let out = forward(&mut tape, &bound, &params, &s, 0, &ctx, &mdp_cfg, Direction::Forward).unwrap();
        assert_eq!(out.actions.len(), ALL_ELEMENTS.len());
        let expect = -(ALL_ELEMENTS.len() as f64).ln();
        for &lp in &tape.value(out.log_probs).data {
            assert!((lp - expect).abs() < 1e-12);
        }

        // A mid-construction state mixing several families.
        let (s2, t2) = random_state(3, 8, &mdp_cfg);
        let mut tape2 = Tape::new();
        let bound2 = params.bind(&mut tape2);
        let out2 =
            forward(&mut tape2, &bound2, &params, &s2, t2, &ctx, &mdp_cfg, Direction::Forward).unwrap();
        let k = out2.actions.len() as f64;
        for &lp in &tape2.value(out2.log_probs).data {
            assert!((lp - (-k.ln())).abs() < 1e-12);
        }
    }

    #[test]
    fn log_probs_normalize() {
        let pcfg = tiny_config();
        let params = PolicyParams::init(pcfg, 99).unwrap();
        let mdp_cfg = MdpConfig::default();
        let ctx = tiny_ctx(6);
        for seed in 0..12u64 {
            let (s, t) = random_state(seed, 10, &mdp_cfg);
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let out =
                forward(&mut tape, &bound, &params, &s, t, &ctx, &mdp_cfg, Direction::Forward).unwrap();
            let total: f64 = tape.value(out.log_probs).data.iter().map(|x| x.exp()).sum();
            assert!((total - 1.0).abs() < 1e-9, "forward sum {total}");
            if !s.graph.is_empty() && !s.is_seed() {
                let mut tb = Tape::new();
                let bb = params.bind(&mut tb);
                let outb =
                    forward(&mut tb, &bb, &params, &s, t, &ctx, &mdp_cfg, Direction::Backward).unwrap();
                let tot: f64 = tb.value(outb.log_probs).data.iter().map(|x| x.exp()).sum();
                assert!((tot - 1.0).abs() < 1e-9, "backward sum {tot}");
            }
        }
    }

    fn permute_action(a: &Action, perm: &[usize], old: &State, new: &State) -> Action {
        let pe = |edge: &usize| -> usize {
            let e = old.graph.edge(*edge);
            new.graph.edge_between(perm[e.a], perm[e.b]).unwrap()
        };
        match a {
            Action::Stop => Action::Stop,
            Action::AddNode { attach, element } => Action::AddNode {
                attach: attach.map(|u| perm[u]),
                element: *element,
            },
            Action::AddEdge { u, v } => {
                let (x, y) = (perm[*u], perm[*v]);
                Action::AddEdge { u: x.min(y), v: x.max(y) }
            }
            Action::SetEdgeAttr { edge, order } => Action::SetEdgeAttr { edge: pe(edge), order: *order },
            Action::SetNodeAttr { node, tag } => Action::SetNodeAttr { node: perm[*node], tag: *tag },
            Action::DeleteNode { node } => Action::DeleteNode { node: perm[*node] },
            Action::DeleteEdge { edge } => Action::DeleteEdge { edge: pe(edge) },
            Action::UnsetEdgeAttr { edge } => Action::UnsetEdgeAttr { edge: pe(edge) },
            Action::UnsetNodeAttr { node } => Action::UnsetNodeAttr { node: perm[*node] },
        }
    }

    #[test]
    fn permutation_equivariance() {
        let pcfg = tiny_config();
        let params = PolicyParams::init(pcfg, 7).unwrap();
        let mdp_cfg = MdpConfig::default();
        let ctx = tiny_ctx(6);
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for seed in 0..8u64 {
            let (s, t) = random_state(seed + 40, 10, &mdp_cfg);
            let n = s.graph.node_count();
            if n < 2 {
                continue;
            }
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i);
                perm.swap(i, j);
            }
            let permuted = State {
                graph: s.graph.permuted(&perm),
                frozen_nodes: 0,
                frozen_edges: 0,
                stopped: s.stopped,
            };

            for dir in [Direction::Forward, Direction::Backward] {
                if dir == Direction::Backward && (s.graph.is_empty() || s.is_seed()) {
                    continue;
                }
                let mut tape_a = Tape::new();
                let bound_a = params.bind(&mut tape_a);
                let out_a = forward(&mut tape_a, &bound_a, &params, &s, t, &ctx, &mdp_cfg, dir).unwrap();
                let mut tape_b = Tape::new();
                let bound_b = params.bind(&mut tape_b);
                let out_b =
                    forward(&mut tape_b, &bound_b, &params, &permuted, t, &ctx, &mdp_cfg, dir).unwrap();
                assert_eq!(out_a.actions.len(), out_b.actions.len());
                for (i, a) in out_a.actions.iter().enumerate() {
                    let mapped = permute_action(a, &perm, &s, &permuted);
                    let j = out_b
                        .actions
                        .iter()
                        .position(|x| *x == mapped)
                        .unwrap_or_else(|| panic!("{mapped:?} missing in permuted actions"));
                    let la = tape_a.value(out_a.log_probs).data[i];
                    let lb = tape_b.value(out_b.log_probs).data[j];
                    assert!(
                        (la - lb).abs() < 1e-8,
                        "{a:?} -> {mapped:?}: {la} vs {lb}"
                    );
                }
            }
        }
    }

    #[test]
    fn trajectory_log_prob_under_uniform_policy() {
        let pcfg = tiny_config();
        let params = PolicyParams::zeros(pcfg).unwrap();
        let mdp_cfg = MdpConfig::default();
        let ctx = tiny_ctx(6);
        let s0 = State::empty();
        let actions = vec![
            Action::AddNode { attach: None, element: Element::C },
            Action::Stop,
        ];
        let traj = replay(&s0, &actions, &mdp_cfg).unwrap();

        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let lp = log_prob_of(&mut tape, &bound, &params, &traj, &ctx, &mdp_cfg, Direction::Forward).unwrap();
        // Step 0: 9 root placements. Step 1: Stop + 9 attachments + R/S tags.
        let k1 = forward_actions(&traj.states[1], 1, &mdp_cfg).unwrap().len() as f64;
        assert_eq!(k1, 12.0);
        let expect = -(9.0f64.ln() + k1.ln());
        assert!((tape.value(lp).item() - expect).abs() < 1e-12);

        // Backward: the only deconstruction of a single atom is forced.
        let lpb = log_prob_of(&mut tape, &bound, &params, &traj, &ctx, &mdp_cfg, Direction::Backward).unwrap();
        assert_eq!(tape.value(lpb).item(), 0.0);
    }

    #[test]
    fn corrupt_trajectory_is_reported() {
        let pcfg = tiny_config();
        let params = PolicyParams::zeros(pcfg).unwrap();
        let mdp_cfg = MdpConfig::default();
        let ctx = tiny_ctx(6);
        let s0 = State::empty();
        let good = replay(
            &s0,
            &[Action::AddNode { attach: None, element: Element::C }, Action::Stop],
            &mdp_cfg,
        )
        .unwrap();
        let mut bad = good.clone();
        bad.actions[0] = Action::SetNodeAttr { node: 5, tag: Chirality::R };
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let err = log_prob_of(&mut tape, &bound, &params, &bad, &ctx, &mdp_cfg, Direction::Forward);
        assert!(matches!(err, Err(PolicyError::CorruptTrajectory { step: 0 })));
    }

    #[test]
    fn gradients_match_finite_differences_spot_check() {
        let pcfg = PolicyConfig {
            num_layers: 1,
            emb_dim: 4,
            num_heads: 1,
            num_mlp_layers: 1,
            i2h_width: 1,
            cond_dim: 3,
            leaky_slope: 0.01,
        };
        let params = PolicyParams::init(pcfg.clone(), 5).unwrap();
        let mdp_cfg = MdpConfig::default();
        let ctx = tiny_ctx(3);
        let (s, t) = random_state(11, 6, &mdp_cfg);

        let loss_of = |p: &PolicyParams| -> f64 {
            let mut tape = Tape::new();
            let bound = p.bind(&mut tape);
            let out = forward(&mut tape, &bound, p, &s, t, &ctx, &mdp_cfg, Direction::Forward).unwrap();
            let picked = tape.gather_elems(out.log_probs, &[(0, 0)]);
            let z = log_z(&mut tape, &bound, p, &ctx);
            let zsq = tape.square(z);
            let sum = tape.add(picked, zsq);
            let neg = tape.neg(sum);
            tape.value(neg).item()
        };

        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let out = forward(&mut tape, &bound, &params, &s, t, &ctx, &mdp_cfg, Direction::Forward).unwrap();
        let picked = tape.gather_elems(out.log_probs, &[(0, 0)]);
        let z = log_z(&mut tape, &bound, &params, &ctx);
        let zsq = tape.square(z);
        let sum = tape.add(picked, zsq);
        let loss = tape.neg(sum);
        let grads = tape.backward(loss);

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let h = 1e-5;
        let mut checked = 0;
        while checked < 30 {
            let ti = rng.gen_range(0..params.num_tensors());
            let len = params.tensors()[ti].len();
            if len == 0 {
                continue;
            }
            let ci = rng.gen_range(0..len);
            let mut up = params.clone();
            up.tensors_mut()[ti].data[ci] += h;
            let mut down = params.clone();
            down.tensors_mut()[ti].data[ci] -= h;
            let fd = (loss_of(&up) - loss_of(&down)) / (2.0 * h);
            let an = grads[bound.vars()[ti].index()].data[ci];
            let denom = fd.abs().max(an.abs()).max(1e-7);
            assert!(
                (fd - an).abs() / denom < 1e-4,
                "tensor {} coord {ci}: fd={fd} analytic={an}",
                params.names()[ti]
            );
            checked += 1;
        }
    }

    #[test]
    fn deterministic_init() {
        let a = PolicyParams::init(tiny_config(), 1234).unwrap();
        let b = PolicyParams::init(tiny_config(), 1234).unwrap();
        assert_eq!(a, b);
        let c = PolicyParams::init(tiny_config(), 1235).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn log_z_basics() {
        let params = PolicyParams::zeros(tiny_config()).unwrap();
        let ctx = tiny_ctx(6);
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let z = log_z(&mut tape, &bound, &params, &ctx);
        assert_eq!(tape.value(z).item(), 0.0);

        let p2 = PolicyParams::init(tiny_config(), 4).unwrap();
        let eval = |p: &PolicyParams| {
            let mut t = Tape::new();
            let b = p.bind(&mut t);
            let z = log_z(&mut t, &b, p, &ctx);
            t.value(z).item()
        };
        assert_eq!(eval(&p2), eval(&p2));

        // Recalibration with sigma = 0 is a no-op; with sigma > 0 it only
        // touches the logZ head.
        let mut p3 = p2.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        p3.recalibrate_log_z(0.0, &mut rng);
        assert_eq!(p2, p3);
        p3.recalibrate_log_z(0.5, &mut rng);
        assert_ne!(eval(&p2), eval(&p3));
        for name in p2.names() {
            if !name.starts_with("logz.") {
                assert_eq!(p2.tensor(name), p3.tensor(name), "{name} changed");
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let params = PolicyParams::init(tiny_config(), 21).unwrap();
        params.save(&path).unwrap();
        let loaded = PolicyParams::load(&path, tiny_config(), false).unwrap();
        // Values survive modulo the f32 round-trip.
        for (a, b) in params.tensors().iter().zip(loaded.tensors()) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert_eq!(*x as f32, *y as f32);
                assert_eq!(*y, (*y as f32) as f64);
            }
        }
        // Same file, same bytes.
        let path2 = dir.path().join("model2.ckpt");
        loaded.save(&path2).unwrap();
        let b1 = std::fs::read(&path).unwrap();
        let b2 = std::fs::read(&path2).unwrap();
        assert_eq!(b1, b2);
    }

    #[test]
    fn checkpoint_rejects_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let params = PolicyParams::init(tiny_config(), 21).unwrap();
        params.save(&path).unwrap();

        let mut other = tiny_config();
        other.cond_dim = 7;
        let err = PolicyParams::load(&path, other.clone(), false);
        assert!(matches!(err, Err(PolicyError::Checkpoint(_))));
        // force skips the hash check but still validates shapes.
        let forced = PolicyParams::load(&path, other, true);
        assert!(forced.is_err());

        // Corrupt magic.
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            PolicyParams::load(&path, tiny_config(), false),
            Err(PolicyError::Checkpoint(_))
        ));
    }

    #[test]
    fn bad_config_rejected() {
        let mut cfg = tiny_config();
        cfg.emb_dim = 9;
        cfg.num_heads = 2;
        assert!(matches!(PolicyParams::init(cfg, 0), Err(PolicyError::BadConfig(_))));
    }
}
