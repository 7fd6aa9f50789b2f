//! Canonical atom ranking by partition refinement with individualization.
//! Among all discrete leaves of the search tree the lexicographically
//! smallest written SMILES wins; leaves equivalent under an automorphism are
//! pruned by comparing relabeled-graph certificates.

use std::collections::HashSet;

use super::{aromatic, write, BondOrder, Molecule};

const LEAF_BUDGET: usize = 20_000;

fn bond_code(order: BondOrder) -> u8 {
    match order {
        BondOrder::Single => 1,
        BondOrder::Double => 2,
        BondOrder::Triple => 3,
        BondOrder::Aromatic => 4,
    }
}

type AtomLabel = (u8, i8, usize, u8, bool);

fn labels(mol: &Molecule) -> Vec<AtomLabel> {
    (0..mol.atom_count())
        .map(|i| {
            let a = mol.atom(i);
            (
                a.element.atomic_number(),
                a.formal_charge,
                mol.degree(i),
                mol.total_h(i),
                a.in_ring,
            )
        })
        .collect()
}

/// Competition ranks: each atom gets the number of atoms with a strictly
/// smaller key.
fn rank_by<K: Ord>(keys: &[K]) -> (Vec<usize>, usize) {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut ranks = vec![0; keys.len()];
    let mut cells = 0;
    for (p, &i) in idx.iter().enumerate() {
        if p == 0 || keys[idx[p - 1]] != keys[i] {
            cells += 1;
            ranks[i] = p;
        } else {
            ranks[i] = ranks[idx[p - 1]];
        }
    }
    (ranks, cells)
}

fn cell_count(ranks: &[usize]) -> usize {
    let mut seen = vec![false; ranks.len()];
    let mut c = 0;
    for &r in ranks {
        if !seen[r] {
            seen[r] = true;
            c += 1;
        }
    }
    c
}

fn refine(mol: &Molecule, ranks: &mut Vec<usize>) {
    let mut cells = cell_count(ranks);
    loop {
        if cells == ranks.len() {
            return;
        }
        let keys: Vec<(usize, Vec<(usize, u8)>)> = (0..mol.atom_count())
            .map(|i| {
                let mut nb: Vec<(usize, u8)> = mol
                    .neighbors(i)
                    .iter()
                    .map(|&(j, b)| (ranks[j], bond_code(mol.bonds()[b].kind())))
                    .collect();
                nb.sort_unstable();
                (ranks[i], nb)
            })
            .collect();
        let (next, next_cells) = rank_by(&keys);
        *ranks = next;
        if next_cells == cells {
            return;
        }
        cells = next_cells;
    }
}

fn first_split_cell(ranks: &[usize]) -> Option<(usize, Vec<usize>)> {
    let mut counts = vec![0usize; ranks.len()];
    for &r in ranks {
        counts[r] += 1;
    }
    let r = (0..ranks.len()).find(|&r| counts[r] > 1)?;
    let members = (0..ranks.len()).filter(|&i| ranks[i] == r).collect();
    Some((r, members))
}

fn individualize(ranks: &[usize], cell: usize, members: &[usize], keep: usize) -> Vec<usize> {
    let mut child = ranks.to_vec();
    for &m in members {
        if m != keep {
            child[m] = cell + 1;
        }
    }
    child
}

/// The molecule relabeled by a discrete ranking. Equal certificates for two
/// leaves imply an automorphism carrying one ranking onto the other.
fn certificate(mol: &Molecule, labels: &[AtomLabel], ranks: &[usize]) -> Vec<i64> {
    let n = ranks.len();
    let mut by_rank = vec![0; n];
    for (i, &r) in ranks.iter().enumerate() {
        by_rank[r] = i;
    }
    let mut cert = Vec::with_capacity(5 * n + 3 * mol.bonds().len());
    for &i in &by_rank {
        let (z, q, d, h, ring) = labels[i];
        cert.extend([z as i64, q as i64, d as i64, h as i64, ring as i64]);
    }
    let mut edges: Vec<(usize, usize, u8)> = mol
        .bonds()
        .iter()
        .map(|b| {
            let (x, y) = (ranks[b.begin], ranks[b.end]);
            (x.min(y), x.max(y), bond_code(b.kind()))
        })
        .collect();
    edges.sort_unstable();
    for (x, y, c) in edges {
        cert.extend([x as i64, y as i64, c as i64]);
    }
    cert
}

struct Search<'a> {
    mol: &'a Molecule,
    labels: Vec<AtomLabel>,
    best: Option<(String, Vec<usize>)>,
    leaves: usize,
}

impl Search<'_> {
    fn leaf(&mut self, ranks: Vec<usize>) -> Vec<i64> {
        self.leaves += 1;
        let orders = aromatic::kekule_orders(self.mol, &ranks);
        let s = write::write(self.mol, &ranks, &orders);
        let better = match &self.best {
            None => true,
            Some((b, _)) => s < *b,
        };
        let cert = certificate(self.mol, &self.labels, &ranks);
        if better {
            self.best = Some((s, ranks));
        }
        cert
    }

    fn first_leaf_cert(&self, mut ranks: Vec<usize>) -> Vec<i64> {
        loop {
            refine(self.mol, &mut ranks);
            match first_split_cell(&ranks) {
                None => return certificate(self.mol, &self.labels, &ranks),
                Some((cell, members)) => {
                    ranks = individualize(&ranks, cell, &members, members[0]);
                }
            }
        }
    }

    /// Explores the subtree under `ranks`; returns the certificates of every
    /// leaf reached.
    fn explore(&mut self, mut ranks: Vec<usize>) -> HashSet<Vec<i64>> {
        refine(self.mol, &mut ranks);
        let Some((cell, members)) = first_split_cell(&ranks) else {
            return HashSet::from([self.leaf(ranks)]);
        };
        let mut seen: HashSet<Vec<i64>> = HashSet::new();
        for &m in &members {
            if self.leaves >= LEAF_BUDGET && self.best.is_some() {
                break;
            }
            let child = individualize(&ranks, cell, &members, m);
            if !seen.is_empty() && seen.contains(&self.first_leaf_cert(child.clone())) {
                continue;
            }
            let sub = self.explore(child);
            seen.extend(sub);
        }
        seen
    }
}

fn canonical_form(mol: &Molecule) -> (String, Vec<usize>) {
    if mol.atom_count() == 0 {
        return (String::new(), Vec::new());
    }
    let labels = labels(mol);
    let (ranks, _) = rank_by(&labels);
    let mut search = Search {
        mol,
        labels,
        best: None,
        leaves: 0,
    };
    search.explore(ranks);
    search.best.expect("search reaches at least one leaf")
}

/// A permutation of atom indices (as ranks 0..n) that is invariant under
/// renumbering of the input.
pub fn canonical_ranks(mol: &Molecule) -> Vec<usize> {
    canonical_form(mol).1
}

/// Canonical Kekulé SMILES. Two molecules are the same graph exactly when
/// their canonical strings are equal.
pub fn canonical_smiles(mol: &Molecule) -> String {
    canonical_form(mol).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;

    fn canon(s: &str) -> String {
        canonical_smiles(&parse_smiles(s).unwrap())
    }

    #[test]
    fn spellings_agree() {
        assert_eq!(canon("NCCO"), canon("OCCN"));
        assert_eq!(canon("CC(C)(N)CO"), canon("OCC(C)(C)N"));
        assert_eq!(canon("C1CNCCN1"), canon("N1CCNCC1"));
        assert_eq!(canon("CN1CCNCC1"), canon("C1CN(C)CCN1"));
        assert_eq!(canon("c1ccccc1O"), canon("OC1=CC=CC=C1"));
        assert_eq!(canon("C[NH3+]"), canon("[NH3+]C"));
    }

    #[test]
    fn distinct_graphs_differ() {
        assert_ne!(canon("CCNCC"), canon("CCCNC"));
        assert_ne!(canon("CC1CNCCN1"), canon("CN1CCNCC1"));
        assert_ne!(canon("C1CCCCC1"), canon("C1CCC2CC2C1"));
    }

    #[test]
    fn canonical_is_fixed_point() {
        for s in ["NC(CO)(CO)CO", "OCCC1CCCCN1", "c1ccc2[nH]ccc2c1", "C12C3C4C1C5C2C3C45"] {
            let c = canon(s);
            assert_eq!(canon(&c), c, "{s}");
        }
    }

    #[test]
    fn ranks_are_a_permutation() {
        let mol = parse_smiles("NCCNCCNCCN").unwrap();
        let mut r = canonical_ranks(&mol);
        r.sort_unstable();
        assert_eq!(r, (0..mol.atom_count()).collect::<Vec<_>>());
    }

    #[test]
    fn highly_symmetric_graphs_finish() {
        // cubane and a long chain of fused rings
        assert!(!canon("C12C3C4C1C5C2C3C45").is_empty());
        assert!(!canon("C1CC2CC3CC4CC5CC6CC7CC8CCCCC8CC7CC6CC5CC4CC3CC2C1").is_empty());
    }
}
