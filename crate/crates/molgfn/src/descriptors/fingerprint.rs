//! Circular (Morgan-style) fingerprints with FNV-1a hashing, plus Tanimoto
//! similarity. Environments are hashed from permutation-invariant tuples, so
//! bits are stable across node relabelings, runs, and platforms.

use crate::molgraph::MolGraph;

use super::DescriptorError;

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a(words: &[u64]) -> u64 {
    let mut h = FNV_OFFSET;
    for w in words {
        for byte in w.to_le_bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

/// Fixed-width bit set over hashed circular substructures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fingerprint {
    width: usize,
    words: Vec<u64>,
}

pub const DEFAULT_FP_WIDTH: usize = 2048;
pub const DEFAULT_FP_RADIUS: u32 = 2;

impl Fingerprint {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn bit(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }
}

/// Hashes circular environments of radius 0..=radius into `width` bits.
/// `width` must be a power of two.
pub fn fingerprint(g: &MolGraph, radius: u32, width: usize) -> Result<Fingerprint, DescriptorError> {
    if g.is_empty() {
        return Err(DescriptorError::EmptyGraph);
    }
    assert!(width.is_power_of_two() && width >= 64, "width must be a power of two >= 64");
    let n = g.node_count();
    let in_ring = g.ring_membership();

    // Radius-0 identifier: the atom's local invariant tuple.
    let mut ids: Vec<u64> = (0..n)
        .map(|v| {
            fnv1a(&[
                g.atom(v).element.index() as u64,
                g.degree(v) as u64,
                u64::from(g.explicit_valence(v)),
                u64::from(g.implicit_hydrogens(v).unwrap_or(0)),
                u64::from(in_ring[v]),
            ])
        })
        .collect();

    let mut fp = Fingerprint { width, words: vec![0; width / 64] };
    for &id in &ids {
        fp.set((id % width as u64) as usize);
    }
    for _ in 0..radius {
        let next: Vec<u64> = (0..n)
            .map(|v| {
                let mut env: Vec<u64> = g
                    .incident_edges(v)
                    .map(|(_, e)| {
                        (e.order.index() as u64) << 56 ^ ids[e.other(v).unwrap()]
                    })
                    .collect();
                env.sort_unstable();
                let mut words = vec![ids[v]];
                words.extend(env);
                fnv1a(&words)
            })
            .collect();
        ids = next;
        for &id in &ids {
            fp.set((id % width as u64) as usize);
        }
    }
    Ok(fp)
}

/// |a AND b| / |a OR b| over set bits.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, DescriptorError> {
    if a.width != b.width {
        return Err(DescriptorError::WidthMismatch(a.width, b.width));
    }
    let mut inter = 0u32;
    let mut union = 0u32;
    for (x, y) in a.words.iter().zip(&b.words) {
        inter += (x & y).count_ones();
        union += (x | y).count_ones();
    }
    if union == 0 {
        return Err(DescriptorError::EmptyFingerprints);
    }
    Ok(f64::from(inter) / f64::from(union))
}
