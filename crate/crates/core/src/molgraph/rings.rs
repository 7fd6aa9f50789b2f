//! Smallest set of smallest rings via Horton's candidate cycles followed by
//! greedy GF(2) elimination over bond incidence vectors.

use std::collections::{HashSet, VecDeque};

use super::Molecule;

struct Candidate {
    atoms: Vec<usize>,
    edges: Vec<u64>,
}

pub(crate) fn smallest_set_of_smallest_rings(mol: &Molecule) -> Vec<Vec<usize>> {
    let n = mol.atom_count();
    let m = mol.bonds().len();
    if m + 1 <= n {
        return Vec::new();
    }
    let cyclomatic = m + 1 - n;
    let words = m.div_ceil(64);

    // shortest-path trees from every atom
    let mut parents = vec![vec![usize::MAX; n]; n];
    let mut dists = vec![vec![usize::MAX; n]; n];
    for root in 0..n {
        let (parent, dist) = (&mut parents[root], &mut dists[root]);
        dist[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            let mut next: Vec<usize> = mol.neighbors(u).iter().map(|&(v, _)| v).collect();
            next.sort_unstable();
            for v in next {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
    }
    let path = |root: usize, to: usize| -> Vec<usize> {
        let mut p = vec![to];
        let mut cur = to;
        while cur != root {
            cur = parents[root][cur];
            p.push(cur);
        }
        p.reverse();
        p
    };

    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let mut candidates: Vec<Candidate> = Vec::new();
    for root in 0..n {
        for b in mol.bonds() {
            let (x, y) = (b.begin, b.end);
            let (dx, dy) = (dists[root][x], dists[root][y]);
            if dx.abs_diff(dy) > 1 {
                continue;
            }
            let px = path(root, x);
            let py = path(root, y);
            let sx: HashSet<usize> = px.iter().copied().collect();
            if py.iter().skip(1).any(|a| sx.contains(a)) {
                continue;
            }
            let mut cycle = px;
            cycle.extend(py.iter().skip(1).rev());
            if cycle.len() < 3 {
                continue;
            }
            let mut edges = vec![0u64; words];
            for i in 0..cycle.len() {
                let bi = mol
                    .bond_between(cycle[i], cycle[(i + 1) % cycle.len()])
                    .expect("cycle follows bonds");
                edges[bi / 64] |= 1 << (bi % 64);
            }
            if seen.insert(edges.clone()) {
                candidates.push(Candidate {
                    atoms: cycle,
                    edges,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.atoms
            .len()
            .cmp(&b.atoms.len())
            .then_with(|| a.edges.cmp(&b.edges))
    });

    // greedy independent selection, keeping a reduced row-echelon basis
    let mut basis: Vec<(usize, Vec<u64>)> = Vec::new();
    let mut rings = Vec::new();
    for cand in candidates {
        let mut v = cand.edges.clone();
        for (pivot, row) in &basis {
            if v[pivot / 64] >> (pivot % 64) & 1 == 1 {
                for (w, r) in v.iter_mut().zip(row) {
                    *w ^= r;
                }
            }
        }
        let pivot = v
            .iter()
            .enumerate()
            .find(|(_, &w)| w != 0)
            .map(|(i, &w)| i * 64 + w.trailing_zeros() as usize);
        if let Some(pivot) = pivot {
            for (_, row) in basis.iter_mut() {
                if row[pivot / 64] >> (pivot % 64) & 1 == 1 {
                    for (r, w) in row.iter_mut().zip(&v) {
                        *r ^= w;
                    }
                }
            }
            basis.push((pivot, v));
            rings.push(cand.atoms);
            if rings.len() == cyclomatic {
                break;
            }
        }
    }
    rings
}

#[cfg(test)]
mod tests {
    use crate::molgraph::parse_smiles;

    fn ring_sizes(s: &str) -> Vec<usize> {
        let mol = parse_smiles(s).unwrap();
        let mut sizes: Vec<usize> = mol.rings().iter().map(Vec::len).collect();
        sizes.sort_unstable();
        sizes
    }

    #[test]
    fn ring_counts() {
        assert!(ring_sizes("NCCO").is_empty());
        assert_eq!(ring_sizes("C1CNCCN1"), vec![6]);
        assert_eq!(ring_sizes("C1CC2CCC1C2"), vec![5, 5]);
        assert_eq!(ring_sizes("c1ccc2ccccc2c1"), vec![6, 6]);
        assert_eq!(ring_sizes("C12C3C4C1C5C2C3C45"), vec![4, 4, 4, 4, 4]);
        assert_eq!(ring_sizes("C1CC1C1CCC1"), vec![3, 4]);
    }

    #[test]
    fn cyclomatic_number_matches() {
        for s in ["C1CC2CCC1C2", "C1CCC2(CC1)CCCC2", "C1CN2CCN1CC2", "NC1CCCCC1"] {
            let mol = parse_smiles(s).unwrap();
            assert_eq!(mol.rings().len() + mol.atom_count(), mol.bonds().len() + 1, "{s}");
        }
    }
}
