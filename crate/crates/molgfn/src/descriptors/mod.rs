//! Cheap molecular property calculators: the pretraining conditionals
//! (TPSA, drug-likeness, synthetic accessibility, ring count), circular
//! fingerprints with Tanimoto similarity, and external score tables for
//! properties computed elsewhere (docking scores and the like).

mod fingerprint;
mod logp;
mod rings;
mod tpsa;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::molgraph::MolGraph;
use crate::smiles::{self, CanonicalKey};

pub use fingerprint::{fingerprint, tanimoto, Fingerprint, DEFAULT_FP_RADIUS, DEFAULT_FP_WIDTH};
pub use logp::logp;
pub use rings::{ring_count_5_6, ring_count_total, sssr};
pub use tpsa::tpsa;

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("empty graph has no descriptors")]
    EmptyGraph,
    #[error("fingerprint widths differ: {0} vs {1}")]
    WidthMismatch(usize, usize),
    #[error("tanimoto of two empty fingerprints is undefined")]
    EmptyFingerprints,
    #[error("no score table named {0:?} is loaded")]
    UnknownTable(String),
    #[error("score table {table:?} has no entry for {key}")]
    MissingEntry { table: String, key: CanonicalKey },
    #[error("score table line {line}: {msg}")]
    MalformedTable { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Smiles(#[from] smiles::SmilesError),
}

/// A property the reward can condition on.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PropertyId {
    Tpsa,
    Qed,
    Sas,
    NumRings,
    MolWt,
    LogP,
    /// Scores looked up from a named external table (by canonical key).
    External(String),
}

impl PropertyId {
    pub fn parse(name: &str) -> PropertyId {
        match name.to_ascii_lowercase().as_str() {
            "tpsa" => PropertyId::Tpsa,
            "qed" => PropertyId::Qed,
            "sas" => PropertyId::Sas,
            "numrings" | "num_rings" | "rings" => PropertyId::NumRings,
            "molwt" | "mol_wt" | "mw" => PropertyId::MolWt,
            "logp" => PropertyId::LogP,
            other => PropertyId::External(other.to_string()),
        }
    }
}

impl fmt::Display for PropertyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PropertyId::Tpsa => f.write_str("tpsa"),
            PropertyId::Qed => f.write_str("qed"),
            PropertyId::Sas => f.write_str("sas"),
            PropertyId::NumRings => f.write_str("numrings"),
            PropertyId::MolWt => f.write_str("molwt"),
            PropertyId::LogP => f.write_str("logp"),
            PropertyId::External(name) => f.write_str(name),
        }
    }
}

/// One-sided-trapezoid desirability: rises on [a,b], holds 1 on [b,c],
/// falls on [c,d]; clamped below to stay positive.
fn ramp(x: f64, a: f64, b: f64, c: f64, d: f64) -> f64 {
    let t = if x < b {
        (x - a) / (b - a)
    } else if x <= c {
        1.0
    } else {
        (d - x) / (d - c)
    };
    t.clamp(1e-3, 1.0)
}

/// Drug-likeness stand-in on (0, 1]: product of desirability ramps over
/// molecular weight, logP, TPSA, and 5/6-ring count. Not the published QED;
/// use an external score table when fidelity matters.
pub fn qed_like(g: &MolGraph) -> f64 {
    let mw = ramp(g.molecular_weight(), 50.0, 150.0, 400.0, 600.0);
    let lp = ramp(logp(g), -2.0, 0.0, 3.0, 6.0);
    let ps = ramp(tpsa(g), -20.0, 40.0, 90.0, 150.0);
    let rc = ramp(ring_count_5_6(g) as f64, 0.0, 1.0, 3.0, 5.0);
    mw * lp * ps * rc
}

/// Synthetic-accessibility stand-in on [1, 10] (1 = easy): size plus
/// ring-complexity plus crowding penalties. Not the published SAS.
pub fn sas_like(g: &MolGraph) -> f64 {
    let n = g.node_count() as f64;
    let size = 0.15 * (n - 20.0).max(0.0);
    let odd_rings = sssr(g).iter().filter(|r| r.len() != 5 && r.len() != 6).count() as f64;
    let crowded = (0..g.node_count()).filter(|&v| g.degree(v) >= 4).count() as f64;
    (1.0 + size + 0.5 * odd_rings + 0.25 * crowded).clamp(1.0, 10.0)
}

/// External scores keyed by canonical SMILES.
#[derive(Debug, Clone, Default)]
pub struct ScoreTable {
    entries: HashMap<CanonicalKey, f64>,
}

impl ScoreTable {
    /// Parses "smiles<TAB>value" lines; '#' lines and blanks are skipped.
    /// Keys are canonicalized, so any SMILES spelling of a molecule matches.
    pub fn parse(text: &str) -> Result<ScoreTable, DescriptorError> {
        let mut entries = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (smi, value) = trimmed.split_once('\t').ok_or_else(|| {
                DescriptorError::MalformedTable { line, msg: "expected smiles<TAB>value".into() }
            })?;
            let value: f64 = value.trim().parse().map_err(|e| {
                DescriptorError::MalformedTable { line, msg: format!("bad value: {e}") }
            })?;
            let graph = smiles::parse(smi.trim())?;
            entries.insert(smiles::canonical_key(&graph), value);
        }
        Ok(ScoreTable { entries })
    }

    pub fn load(path: &Path) -> Result<ScoreTable, DescriptorError> {
        ScoreTable::parse(&fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &CanonicalKey) -> Option<f64> {
        self.entries.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, key: CanonicalKey, value: f64) {
        self.entries.insert(key, value);
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.values().copied()
    }
}

/// Property dispatch plus loaded score tables.
#[derive(Debug, Clone, Default)]
pub struct Evaluator {
    /// When set, `NumRings` counts every SSSR ring instead of only 5/6-rings.
    pub count_all_rings: bool,
    tables: HashMap<String, ScoreTable>,
}

impl Evaluator {
    pub fn new() -> Evaluator {
        Evaluator::default()
    }

    pub fn add_table(&mut self, name: impl Into<String>, table: ScoreTable) {
        self.tables.insert(name.into(), table);
    }

    pub fn table(&self, name: &str) -> Option<&ScoreTable> {
        self.tables.get(name)
    }

    pub fn eval(&self, id: &PropertyId, g: &MolGraph) -> Result<f64, DescriptorError> {
        match id {
            PropertyId::Tpsa => Ok(tpsa(g)),
            PropertyId::Qed => Ok(qed_like(g)),
            PropertyId::Sas => Ok(sas_like(g)),
            PropertyId::NumRings => Ok(if self.count_all_rings {
                ring_count_total(g) as f64
            } else {
                ring_count_5_6(g) as f64
            }),
            PropertyId::MolWt => Ok(g.molecular_weight()),
            PropertyId::LogP => Ok(logp(g)),
            PropertyId::External(name) => {
                let table = self
                    .tables
                    .get(name)
                    .ok_or_else(|| DescriptorError::UnknownTable(name.clone()))?;
                let key = smiles::canonical_key(g);
                table.get(&key).ok_or(DescriptorError::MissingEntry {
                    table: name.clone(),
                    key,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smiles::parse;

    #[test]
    fn qed_like_range_contract() {
        let q = qed_like(&parse("c1ccccc1").unwrap());
        assert!(q > 0.0 && q < 1.0, "{q}");
        // A mid-sized drug-like molecule scores higher than a tiny fragment.
        let ibuprofen = qed_like(&parse("CC(C)Cc1ccc(cc1)C(C)C(=O)O").unwrap());
        assert!(ibuprofen > qed_like(&parse("C").unwrap()));
        assert!(ibuprofen <= 1.0);
    }

    #[test]
    fn sas_like_size_penalty_dominates() {
        let chain60 = "C".repeat(60);
        let s = sas_like(&parse(&chain60).unwrap());
        assert!(s > 5.0, "{s}");
        assert!(sas_like(&parse("c1ccccc1").unwrap()) <= 1.5);
        let s = sas_like(&parse("CC(C)(C)C1CC1C(C)(C)C").unwrap());
        assert!((1.0..=10.0).contains(&s));
    }

    #[test]
    fn score_table_round_trip() {
        let text = "# docking scores\nCCO\t-7.25\nc1ccccc1\t-6.0\n";
        let table = ScoreTable::parse(text).unwrap();
        assert_eq!(table.len(), 2);
        // Any spelling of ethanol hits the same entry.
        let key = smiles::canonical_key(&parse("OCC").unwrap());
        assert_eq!(table.get(&key), Some(-7.25));
    }

    #[test]
    fn score_table_rejects_malformed() {
        assert!(matches!(
            ScoreTable::parse("CCO -7.25\n"),
            Err(DescriptorError::MalformedTable { line: 1, .. })
        ));
        assert!(matches!(
            ScoreTable::parse("CCO\tseven\n"),
            Err(DescriptorError::MalformedTable { line: 1, .. })
        ));
    }

    #[test]
    fn evaluator_dispatch() {
        let mut ev = Evaluator::new();
        let g = parse("c1ccccc1").unwrap();
        assert_eq!(ev.eval(&PropertyId::NumRings, &g).unwrap(), 1.0);
        assert!((ev.eval(&PropertyId::MolWt, &g).unwrap() - 78.114).abs() < 1e-9);
        assert_eq!(ev.eval(&PropertyId::Tpsa, &g).unwrap(), 0.0);

        let cyclopropane = parse("C1CC1").unwrap();
        assert_eq!(ev.eval(&PropertyId::NumRings, &cyclopropane).unwrap(), 0.0);
        ev.count_all_rings = true;
        assert_eq!(ev.eval(&PropertyId::NumRings, &cyclopropane).unwrap(), 1.0);
    }

    #[test]
    fn evaluator_external_table() {
        let mut ev = Evaluator::new();
        let g = parse("CCO").unwrap();
        let missing = ev.eval(&PropertyId::External("dock".into()), &g);
        assert!(matches!(missing, Err(DescriptorError::UnknownTable(_))));

        ev.add_table("dock", ScoreTable::parse("CCO\t-7.25\n").unwrap());
        assert_eq!(ev.eval(&PropertyId::External("dock".into()), &g).unwrap(), -7.25);
        let other = parse("CCC").unwrap();
        assert!(matches!(
            ev.eval(&PropertyId::External("dock".into()), &other),
            Err(DescriptorError::MissingEntry { .. })
        ));
    }

    #[test]
    fn property_id_parsing() {
        assert_eq!(PropertyId::parse("TPSA"), PropertyId::Tpsa);
        assert_eq!(PropertyId::parse("numrings"), PropertyId::NumRings);
        assert_eq!(PropertyId::parse("seh"), PropertyId::External("seh".into()));
    }
}
