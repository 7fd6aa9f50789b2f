//! Hashed circular fingerprints, Tanimoto similarity and sphere-exclusion
//! diversity.

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::molgraph::{BondOrder, Molecule};

pub const DEFAULT_RADIUS: usize = 3;
pub const DEFAULT_WIDTH: usize = 1024;
pub const SEDIV_THRESHOLD: f64 = 0.65;
pub const SEDIV_SAMPLE: usize = 1000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FingerprintError {
    #[error("fingerprint widths differ ({0} vs {1})")]
    WidthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct FingerprintBits {
    words: Vec<u64>,
    width: usize,
    popcount: u32,
}

impl FingerprintBits {
    pub fn new(width: usize) -> Self {
        FingerprintBits {
            words: vec![0; width.div_ceil(64)],
            width,
            popcount: 0,
        }
    }

    pub fn from_indices(width: usize, bits: impl IntoIterator<Item = usize>) -> Self {
        let mut fp = FingerprintBits::new(width);
        for b in bits {
            fp.set(b % width);
        }
        fp
    }

    fn set(&mut self, bit: usize) {
        let (w, m) = (bit / 64, 1u64 << (bit % 64));
        if self.words[w] & m == 0 {
            self.words[w] |= m;
            self.popcount += 1;
        }
    }

    pub fn get(&self, bit: usize) -> bool {
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn popcount(&self) -> u32 {
        self.popcount
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.width).filter(|&b| self.get(b))
    }

    /// Bits as 0/1 reals, the featurization used by the regressors.
    pub fn to_dense(&self) -> Vec<f64> {
        (0..self.width).map(|b| if self.get(b) { 1.0 } else { 0.0 }).collect()
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a_bytes(h: u64, bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(h, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

fn fnv1a(values: &[u64]) -> u64 {
    values
        .iter()
        .fold(FNV_OFFSET, |h, v| fnv1a_bytes(h, &v.to_le_bytes()))
}

fn bond_code(order: BondOrder) -> u64 {
    match order {
        BondOrder::Single => 1,
        BondOrder::Double => 2,
        BondOrder::Triple => 3,
        BondOrder::Aromatic => 4,
    }
}

/// Atom identifiers of every iteration 0..=radius, before folding.
pub fn circular_identifiers(mol: &Molecule, radius: usize) -> Vec<u64> {
    let n = mol.atom_count();
    let mut ids: Vec<u64> = (0..n)
        .map(|i| {
            let a = mol.atom(i);
            fnv1a(&[
                a.element.atomic_number() as u64,
                mol.degree(i) as u64,
                mol.total_h(i) as u64,
                a.formal_charge as i64 as u64,
                a.in_ring as u64,
            ])
        })
        .collect();
    let mut all = ids.clone();
    for r in 1..=radius {
        let next: Vec<u64> = (0..n)
            .map(|i| {
                let mut env: Vec<(u64, u64)> = mol
                    .neighbors(i)
                    .iter()
                    .map(|&(j, b)| (bond_code(mol.bonds()[b].kind()), ids[j]))
                    .collect();
                env.sort_unstable();
                let mut key = vec![r as u64, ids[i]];
                for (b, id) in env {
                    key.push(b);
                    key.push(id);
                }
                fnv1a(&key)
            })
            .collect();
        all.extend_from_slice(&next);
        ids = next;
    }
    all
}

pub fn ecfp(mol: &Molecule, radius: usize, width: usize) -> FingerprintBits {
    let ids = circular_identifiers(mol, radius);
    FingerprintBits::from_indices(width, ids.into_iter().map(|id| (id % width as u64) as usize))
}

/// ECFP6 at 1024 bits.
pub fn ecfp6(mol: &Molecule) -> FingerprintBits {
    ecfp(mol, DEFAULT_RADIUS, DEFAULT_WIDTH)
}

pub fn tanimoto(a: &FingerprintBits, b: &FingerprintBits) -> Result<f64, FingerprintError> {
    if a.width != b.width {
        return Err(FingerprintError::WidthMismatch(a.width, b.width));
    }
    let (mut both, mut either) = (0u32, 0u32);
    for (x, y) in a.words.iter().zip(&b.words) {
        both += (x & y).count_ones();
        either += (x | y).count_ones();
    }
    if either == 0 {
        return Ok(1.0);
    }
    Ok(both as f64 / either as f64)
}

/// Greedy sphere exclusion over `fps` in the given order; returns the number
/// of centers.
pub fn sphere_exclusion_centers(fps: &[&FingerprintBits], threshold: f64) -> usize {
    let mut centers: Vec<&FingerprintBits> = Vec::new();
    for &fp in fps {
        let near = centers
            .iter()
            .any(|c| tanimoto(c, fp).map_or(true, |t| t >= threshold));
        if !near {
            centers.push(fp);
        }
    }
    centers.len()
}

/// Fraction of a random sample of `min(sample, n)` fingerprints that become
/// sphere-exclusion centers when scanned in random order.
pub fn sphere_exclusion_diversity<R: Rng + ?Sized>(
    fps: &[FingerprintBits],
    threshold: f64,
    sample: usize,
    rng: &mut R,
) -> Result<f64, FingerprintError> {
    let k = sample.min(fps.len());
    if k == 0 {
        return Err(FingerprintError::EmptyInput);
    }
    let mut picked: Vec<&FingerprintBits> = fps.choose_multiple(rng, k).collect();
    picked.shuffle(rng);
    Ok(sphere_exclusion_centers(&picked, threshold) as f64 / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;

    fn fp(s: &str) -> FingerprintBits {
        ecfp6(&parse_smiles(s).unwrap())
    }

    #[test]
    fn order_invariant_and_nonempty() {
        assert_eq!(fp("OCCN"), fp("NCCO"));
        assert!(fp("C").popcount() >= 1);
        assert_ne!(fp("NCCO"), fp("OCCNCCO"));
    }

    #[test]
    fn popcount_matches_bits() {
        let f = fp("CN1CCNCC1");
        assert_eq!(f.ones().count() as u32, f.popcount());
    }

    #[test]
    fn tanimoto_edges() {
        let a = fp("NCCO");
        assert_eq!(tanimoto(&a, &a).unwrap(), 1.0);
        let x = FingerprintBits::from_indices(64, [1, 2]);
        let y = FingerprintBits::from_indices(64, [3]);
        assert_eq!(tanimoto(&x, &y).unwrap(), 0.0);
        let e = FingerprintBits::new(64);
        assert_eq!(tanimoto(&e, &e).unwrap(), 1.0);
        assert_eq!(
            tanimoto(&x, &a),
            Err(FingerprintError::WidthMismatch(64, 1024))
        );
    }

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a_bytes(FNV_OFFSET, b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a_bytes(FNV_OFFSET, b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a_bytes(FNV_OFFSET, b"foobar"), 0x85944171f73967e8);
    }
}
