//! SMILES subset parser, writer, and canonicalizer.
//!
//! The grammar covers the nine-element vocabulary: organic-subset atoms,
//! bracket atoms with optional chirality (`@`, `@@`) and hydrogen counts,
//! bonds `- = # :`, branches, ring closures (including `%nn`), and aromatic
//! lowercase `c n o s`. Charges, isotopes, stereo bonds, wildcards, and
//! multi-fragment dots are rejected loudly. Aromatic input is kekulized on
//! parse; output is always kekulized.

mod canon;
mod kekulize;
mod parser;
mod writer;

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::molgraph::{GraphError, MolGraph};

pub use canon::canonical_key;
pub use parser::parse;
pub use writer::write;

/// Canonical SMILES with chirality tags stripped. Two graphs that are
/// isomorphic up to chirality produce equal keys.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalKey(pub String);

impl fmt::Display for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Error)]
pub enum SmilesError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unsupported SMILES feature at position {pos}: {what}")]
    Unsupported { pos: usize, what: String },
    #[error("kekulization failed: {0}")]
    Kekulization(String),
    #[error("valence violation on atom {node}: {msg}")]
    Valence { node: usize, msg: String },
    #[error("cannot write an empty graph")]
    EmptyGraph,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// One successfully parsed corpus line.
#[derive(Debug, Clone)]
pub struct SmiRecord {
    /// 1-based line number in the source file.
    pub line: usize,
    /// The SMILES token as it appeared (trailing columns stripped).
    pub smiles: String,
    pub graph: MolGraph,
}

/// Result of ingesting a `.smi` corpus in lenient mode.
#[derive(Debug, Clone, Default)]
pub struct CorpusLoad {
    pub records: Vec<SmiRecord>,
    /// (line number, error text) for every malformed line.
    pub skipped: Vec<(usize, String)>,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Smiles { line: usize, source: SmilesError },
}

/// Parses corpus text: one SMILES per line, whitespace-delimited trailing
/// columns ignored, blank lines and lines starting with '#' skipped. In
/// strict mode the first malformed line aborts; otherwise malformed lines are
/// recorded in [`CorpusLoad::skipped`].
pub fn load_smi_str(text: &str, strict: bool) -> Result<CorpusLoad, LoadError> {
    let mut out = CorpusLoad::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let token = trimmed.split_whitespace().next().unwrap();
        match parse(token) {
            Ok(graph) => {
                out.records.push(SmiRecord { line, smiles: token.to_string(), graph })
            }
            Err(e) if strict => return Err(LoadError::Smiles { line, source: e }),
            Err(e) => out.skipped.push((line, e.to_string())),
        }
    }
    Ok(out)
}

/// File-reading wrapper around [`load_smi_str`].
pub fn load_smi_file(path: &Path, strict: bool) -> Result<CorpusLoad, LoadError> {
    let text = fs::read_to_string(path)?;
    load_smi_str(&text, strict)
}
