//! Single-pass SMILES reader. Produces atoms plus bond kinds (fixed order or
//! aromatic); kekulization resolves the aromatic ones afterwards.

use std::collections::HashMap;

use crate::molgraph::{BondOrder, Chirality, Element, MolGraph};

use super::kekulize::kekulize;
use super::SmilesError;

/// Bond symbol as written. Aromatic bonds get their final order from the
/// kekulizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum BondSpec {
    Single,
    Double,
    Triple,
    Aromatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum EdgeKind {
    Fixed(BondOrder),
    Aromatic,
}

#[derive(Debug, Clone)]
pub(super) struct ParsedAtom {
    pub element: Element,
    pub aromatic: bool,
    pub chirality: Chirality,
    /// Hydrogen count written inside a bracket atom; checked after parsing.
    pub h_spec: Option<u32>,
    /// True when the atom was written without brackets (organic subset);
    /// such atoms take whatever hydrogen count the valence model derives.
    pub organic: bool,
    pub pos: usize,
}

#[derive(Debug, Clone)]
pub(super) struct ParsedEdge {
    pub a: usize,
    pub b: usize,
    pub kind: EdgeKind,
}

fn syntax(pos: usize, msg: impl Into<String>) -> SmilesError {
    SmilesError::Syntax { pos, msg: msg.into() }
}

fn unsupported(pos: usize, what: impl Into<String>) -> SmilesError {
    SmilesError::Unsupported { pos, what: what.into() }
}

struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek();
        if b.is_some() {
            self.pos += 1;
        }
        b
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }
}

struct Parser<'a> {
    sc: Scanner<'a>,
    atoms: Vec<ParsedAtom>,
    edges: Vec<ParsedEdge>,
    /// Open ring closures: digit -> (atom, bond written at the opening, pos).
    rings: HashMap<u32, (usize, Option<BondSpec>, usize)>,
    branch_stack: Vec<usize>,
    prev: Option<usize>,
    pending_bond: Option<(BondSpec, usize)>,
}

/// Parses a single-fragment SMILES string into a kekulized, validated graph.
pub fn parse(s: &str) -> Result<MolGraph, SmilesError> {
    if s.is_empty() {
        return Err(syntax(0, "empty input"));
    }
    let mut p = Parser {
        sc: Scanner { bytes: s.as_bytes(), pos: 0 },
        atoms: Vec::new(),
        edges: Vec::new(),
        rings: HashMap::new(),
        branch_stack: Vec::new(),
        prev: None,
        pending_bond: None,
    };
    p.run()?;
    p.finish()
}

impl<'a> Parser<'a> {
    fn run(&mut self) -> Result<(), SmilesError> {
        while let Some(b) = self.sc.peek() {
            let pos = self.sc.pos;
            match b {
                b'-' => {
                    self.sc.bump();
                    self.set_bond(BondSpec::Single, pos)?;
                }
                b'=' => {
                    self.sc.bump();
                    self.set_bond(BondSpec::Double, pos)?;
                }
                b'#' => {
                    self.sc.bump();
                    self.set_bond(BondSpec::Triple, pos)?;
                }
                b':' => {
                    self.sc.bump();
                    self.set_bond(BondSpec::Aromatic, pos)?;
                }
                b'(' => {
                    self.sc.bump();
                    if self.pending_bond.is_some() {
                        return Err(syntax(pos, "bond symbol before '('"));
                    }
                    let prev = self
                        .prev
                        .ok_or_else(|| syntax(pos, "branch before any atom"))?;
                    self.branch_stack.push(prev);
                }
                b')' => {
                    self.sc.bump();
                    if self.pending_bond.is_some() {
                        return Err(syntax(pos, "dangling bond before ')'"));
                    }
                    let back = self
                        .branch_stack
                        .pop()
                        .ok_or_else(|| syntax(pos, "unmatched ')'"))?;
                    self.prev = Some(back);
                }
                b'0'..=b'9' => {
                    self.sc.bump();
                    self.ring_closure(u32::from(b - b'0'), pos)?;
                }
                b'%' => {
                    self.sc.bump();
                    let d1 = self.sc.bump().filter(u8::is_ascii_digit);
                    let d2 = self.sc.bump().filter(u8::is_ascii_digit);
                    match (d1, d2) {
                        (Some(a), Some(b)) => {
                            let n = u32::from(a - b'0') * 10 + u32::from(b - b'0');
                            self.ring_closure(n, pos)?;
                        }
                        _ => return Err(syntax(pos, "'%' needs two digits")),
                    }
                }
                b'.' => return Err(unsupported(pos, "multi-fragment '.'")),
                b'/' | b'\\' => {
                    return Err(unsupported(pos, format!("stereo bond '{}'", b as char)))
                }
                b'*' => return Err(unsupported(pos, "wildcard atom '*'")),
                b'[' => {
                    self.sc.bump();
                    let atom = self.bracket_atom(pos)?;
                    self.push_atom(atom)?;
                }
                _ => {
                    let atom = self.organic_atom(pos)?;
                    self.push_atom(atom)?;
                }
            }
        }
        Ok(())
    }

    fn set_bond(&mut self, spec: BondSpec, pos: usize) -> Result<(), SmilesError> {
        if self.pending_bond.is_some() {
            return Err(syntax(pos, "two bond symbols in a row"));
        }
        if self.prev.is_none() {
            return Err(syntax(pos, "bond symbol before any atom"));
        }
        self.pending_bond = Some((spec, pos));
        Ok(())
    }

    /// Organic-subset atom: bare element symbol, aromatic if lowercase.
    fn organic_atom(&mut self, pos: usize) -> Result<ParsedAtom, SmilesError> {
        let b = self.sc.bump().unwrap();
        let (element, aromatic) = match b {
            b'C' => {
                if self.sc.eat(b'l') {
                    (Element::Cl, false)
                } else {
                    (Element::C, false)
                }
            }
            b'B' => {
                if self.sc.eat(b'r') {
                    (Element::Br, false)
                } else {
                    return Err(unsupported(pos, "element 'B'"));
                }
            }
            b'N' => (Element::N, false),
            b'O' => (Element::O, false),
            b'S' => (Element::S, false),
            b'P' => (Element::P, false),
            b'F' => (Element::F, false),
            b'I' => (Element::I, false),
            b'c' => (Element::C, true),
            b'n' => (Element::N, true),
            b'o' => (Element::O, true),
            b's' => (Element::S, true),
            other => {
                return Err(syntax(pos, format!("unexpected character '{}'", other as char)))
            }
        };
        Ok(ParsedAtom {
            element,
            aromatic,
            chirality: Chirality::None,
            h_spec: None,
            organic: true,
            pos,
        })
    }

    /// Bracket atom: `[` element, optional `@`/`@@`, optional `H` count, `]`.
    /// Charges and isotopes are rejected here with the offending token.
    fn bracket_atom(&mut self, open: usize) -> Result<ParsedAtom, SmilesError> {
        if matches!(self.sc.peek(), Some(b'0'..=b'9')) {
            return Err(unsupported(self.sc.pos, "isotope label"));
        }
        let pos = self.sc.pos;
        let b = self.sc.bump().ok_or_else(|| syntax(open, "unterminated bracket atom"))?;
        let (element, aromatic) = match b {
            b'C' => {
                if self.sc.eat(b'l') {
                    (Element::Cl, false)
                } else {
                    (Element::C, false)
                }
            }
            b'B' => {
                if self.sc.eat(b'r') {
                    (Element::Br, false)
                } else {
                    return Err(unsupported(pos, "element 'B'"));
                }
            }
            b'N' => (Element::N, false),
            b'O' => (Element::O, false),
            b'S' => (Element::S, false),
            b'P' => (Element::P, false),
            b'F' => (Element::F, false),
            b'I' => (Element::I, false),
            b'c' => (Element::C, true),
            b'n' => (Element::N, true),
            b'o' => (Element::O, true),
            b's' => (Element::S, true),
            other => {
                return Err(syntax(pos, format!("unknown element '{}'", other as char)))
            }
        };
        let mut chirality = Chirality::None;
        if self.sc.eat(b'@') {
            chirality = if self.sc.eat(b'@') { Chirality::R } else { Chirality::S };
        }
        let mut h_spec = Some(0);
        if self.sc.eat(b'H') {
            let mut count = 1u32;
            if let Some(d @ b'0'..=b'9') = self.sc.peek() {
                self.sc.bump();
                count = u32::from(d - b'0');
            }
            h_spec = Some(count);
        }
        match self.sc.bump() {
            Some(b']') => {}
            Some(c @ (b'+' | b'-')) => {
                return Err(unsupported(self.sc.pos - 1, format!("charge '{}'", c as char)))
            }
            Some(c) => {
                return Err(syntax(
                    self.sc.pos - 1,
                    format!("unexpected '{}' in bracket atom", c as char),
                ))
            }
            None => return Err(syntax(open, "unterminated bracket atom")),
        }
        Ok(ParsedAtom { element, aromatic, chirality, h_spec, organic: false, pos: open })
    }

    fn push_atom(&mut self, atom: ParsedAtom) -> Result<(), SmilesError> {
        let idx = self.atoms.len();
        let pos = atom.pos;
        self.atoms.push(atom);
        if let Some(prev) = self.prev {
            let spec = self.pending_bond.take().map(|(s, _)| s);
            self.add_edge(prev, idx, spec, pos)?;
        } else if let Some((_, bpos)) = self.pending_bond.take() {
            return Err(syntax(bpos, "bond with no preceding atom"));
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn ring_closure(&mut self, digit: u32, pos: usize) -> Result<(), SmilesError> {
        let cur = self.prev.ok_or_else(|| syntax(pos, "ring closure before any atom"))?;
        let spec_here = self.pending_bond.take().map(|(s, _)| s);
        match self.rings.remove(&digit) {
            None => {
                self.rings.insert(digit, (cur, spec_here, pos));
            }
            Some((other, spec_open, _)) => {
                if other == cur {
                    return Err(syntax(pos, format!("ring bond {digit} closes on its own atom")));
                }
                let spec = match (spec_open, spec_here) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(syntax(
                            pos,
                            format!("ring bond {digit} written with conflicting orders"),
                        ))
                    }
                    (a, b) => a.or(b),
                };
                self.add_edge(other, cur, spec, pos)?;
            }
        }
        Ok(())
    }

    fn add_edge(
        &mut self,
        u: usize,
        v: usize,
        spec: Option<BondSpec>,
        pos: usize,
    ) -> Result<(), SmilesError> {
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        if self.edges.iter().any(|e| e.a == a && e.b == b) {
            return Err(syntax(pos, format!("duplicate bond between atoms {a} and {b}")));
        }
        let both_aromatic = self.atoms[a].aromatic && self.atoms[b].aromatic;
        let kind = match spec {
            Some(BondSpec::Single) => EdgeKind::Fixed(BondOrder::Single),
            Some(BondSpec::Double) => EdgeKind::Fixed(BondOrder::Double),
            Some(BondSpec::Triple) => EdgeKind::Fixed(BondOrder::Triple),
            Some(BondSpec::Aromatic) => {
                if !both_aromatic {
                    return Err(syntax(pos, "':' between non-aromatic atoms"));
                }
                EdgeKind::Aromatic
            }
            None if both_aromatic => EdgeKind::Aromatic,
            None => EdgeKind::Fixed(BondOrder::Single),
        };
        self.edges.push(ParsedEdge { a, b, kind });
        Ok(())
    }

    /// Kekulizes, builds the graph, and runs the post-parse checks.
    fn finish(mut self) -> Result<MolGraph, SmilesError> {
        if self.atoms.is_empty() {
            return Err(syntax(self.sc.pos, "no atoms"));
        }
        if let Some((_, pos)) = self.pending_bond {
            return Err(syntax(pos, "dangling bond at end of input"));
        }
        if let Some(back) = self.branch_stack.last() {
            return Err(syntax(self.sc.pos, format!("unclosed branch after atom {back}")));
        }
        if let Some((&digit, &(_, _, pos))) = self.rings.iter().min_by_key(|(d, _)| **d) {
            return Err(syntax(pos, format!("unclosed ring bond {digit}")));
        }

        kekulize(&self.atoms, &mut self.edges)?;

        let mut g = MolGraph::new();
        for atom in &self.atoms {
            let idx = g.add_node(atom.element);
            g.set_chirality(idx, atom.chirality);
        }
        for edge in &self.edges {
            let e = g.add_edge(edge.a, edge.b);
            match edge.kind {
                EdgeKind::Fixed(order) => g.set_edge_order(e, order),
                EdgeKind::Aromatic => unreachable!("kekulizer resolves every aromatic bond"),
            }
        }

        for (node, atom) in self.atoms.iter().enumerate() {
            let implicit = g.implicit_hydrogens(node).map_err(|_| SmilesError::Valence {
                node,
                msg: format!(
                    "explicit valence {} exceeds allowed valences of {}",
                    g.explicit_valence(node),
                    atom.element
                ),
            })?;
            if !atom.organic {
                let spec = atom.h_spec.unwrap_or(0);
                if spec != implicit {
                    return Err(SmilesError::Valence {
                        node,
                        msg: format!(
                            "bracket atom written with {spec} hydrogens but valence model derives {implicit}"
                        ),
                    });
                }
            }
        }
        debug_assert!(g.is_connected(), "single-token SMILES always yields a connected graph");
        Ok(g)
    }
}
