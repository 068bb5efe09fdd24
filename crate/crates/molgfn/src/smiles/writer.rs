//! Kekulized SMILES output. Shares the canonical ranking with
//! [`canonical_key`](super::canonical_key), so written strings are stable
//! across node relabelings; chirality tags are emitted as bracket atoms.

use crate::molgraph::MolGraph;

use super::canon::canonical_forms;
use super::SmilesError;

/// Serializes a finished molecule. `parse(write(g))` is isomorphic to `g`.
pub fn write(g: &MolGraph) -> Result<String, SmilesError> {
    if g.is_empty() {
        return Err(SmilesError::EmptyGraph);
    }
    Ok(canonical_forms(g).tagged)
}
