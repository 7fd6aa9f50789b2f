//! Kekulization of aromatic input and ring-based aromaticity perception.

use super::element::Element;
use super::{Atom, BondOrder, Molecule, ParseError};

const MATCH_STEP_LIMIT: usize = 200_000;

/// Replaces every aromatic bond with a single or double bond so that each
/// atom that needs a pi bond gets exactly one.
pub(crate) fn kekulize_input(
    atoms: &[Atom],
    pairs: &[(usize, usize)],
    orders: &mut [BondOrder],
) -> Result<(), ParseError> {
    let n = atoms.len();
    let mut sigma = vec![0u8; n];
    let mut touches_aromatic = vec![false; n];
    for (&(a, b), &o) in pairs.iter().zip(orders.iter()) {
        sigma[a] += o.valence();
        sigma[b] += o.valence();
        if o == BondOrder::Aromatic {
            touches_aromatic[a] = true;
            touches_aromatic[b] = true;
        }
    }
    let need: Vec<bool> = (0..n)
        .map(|i| {
            let atom = &atoms[i];
            if !(atom.aromatic || touches_aromatic[i]) {
                return false;
            }
            match atom.explicit_h {
                Some(h) => atom
                    .element
                    .valences(atom.formal_charge)
                    .contains(&(sigma[i] + h + 1)),
                None => match atom
                    .element
                    .valences(atom.formal_charge)
                    .into_iter()
                    .find(|&v| v >= sigma[i])
                {
                    Some(v) => v > sigma[i],
                    None => false,
                },
            }
        })
        .collect();

    let edges: Vec<(usize, usize, usize)> = pairs
        .iter()
        .zip(orders.iter())
        .enumerate()
        .filter(|(_, (&(a, b), &o))| o == BondOrder::Aromatic && need[a] && need[b])
        .map(|(bi, (&(a, b), _))| (a, b, bi))
        .collect();
    let priority: Vec<usize> = (0..n).collect();
    let chosen = match perfect_matching(n, &need, &edges, &priority) {
        Some(c) => c,
        None => {
            let atom = (0..n).find(|&i| need[i]).unwrap_or(0);
            return Err(ParseError::Valence {
                atom,
                msg: "aromatic system cannot be kekulized".into(),
            });
        }
    };
    for o in orders.iter_mut() {
        if *o == BondOrder::Aromatic {
            *o = BondOrder::Single;
        }
    }
    for bi in chosen {
        orders[bi] = BondOrder::Double;
    }
    Ok(())
}

/// Finds a set of edges covering every `need` atom exactly once. Atoms are
/// resolved most-constrained first, ties and edge order going by `priority`
/// (lower first), which makes the result a function of the priorities.
fn perfect_matching(
    n: usize,
    need: &[bool],
    edges: &[(usize, usize, usize)],
    priority: &[usize],
) -> Option<Vec<usize>> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for &(a, b, bi) in edges {
        adj[a].push((b, bi));
        adj[b].push((a, bi));
    }
    for list in &mut adj {
        list.sort_by_key(|&(v, _)| priority[v]);
    }
    let mut matched: Vec<bool> = need.iter().map(|&x| !x).collect();
    let mut chosen = Vec::new();
    let mut steps = 0usize;
    if solve(&adj, priority, &mut matched, &mut chosen, &mut steps) {
        Some(chosen)
    } else {
        None
    }
}

fn solve(
    adj: &[Vec<(usize, usize)>],
    priority: &[usize],
    matched: &mut [bool],
    chosen: &mut Vec<usize>,
    steps: &mut usize,
) -> bool {
    *steps += 1;
    if *steps > MATCH_STEP_LIMIT {
        return false;
    }
    let mut best: Option<(usize, usize)> = None;
    for u in 0..matched.len() {
        if matched[u] {
            continue;
        }
        let options = adj[u].iter().filter(|&&(v, _)| !matched[v]).count();
        let better = match best {
            None => true,
            Some((bu, bo)) => options < bo || (options == bo && priority[u] < priority[bu]),
        };
        if better {
            best = Some((u, options));
        }
    }
    let (u, options) = match best {
        None => return true,
        Some(x) => x,
    };
    if options == 0 {
        return false;
    }
    matched[u] = true;
    for &(v, bi) in &adj[u] {
        if matched[v] {
            continue;
        }
        matched[v] = true;
        chosen.push(bi);
        if solve(adj, priority, matched, chosen, steps) {
            return true;
        }
        chosen.pop();
        matched[v] = false;
    }
    matched[u] = false;
    false
}

/// Kekulé bond orders for output, recomputed for aromatic bonds so that the
/// assignment depends only on the graph and the given atom priorities.
pub(crate) fn kekule_orders(mol: &Molecule, priority: &[usize]) -> Vec<BondOrder> {
    let mut orders: Vec<BondOrder> = mol.bonds().iter().map(|b| b.order).collect();
    let n = mol.atom_count();
    let mut need = vec![false; n];
    for b in mol.bonds() {
        if b.aromatic && b.order == BondOrder::Double {
            need[b.begin] = true;
            need[b.end] = true;
        }
    }
    if !need.iter().any(|&x| x) {
        return orders;
    }
    let edges: Vec<(usize, usize, usize)> = mol
        .bonds()
        .iter()
        .enumerate()
        .filter(|(_, b)| b.aromatic && need[b.begin] && need[b.end])
        .map(|(bi, b)| (b.begin, b.end, bi))
        .collect();
    if let Some(chosen) = perfect_matching(n, &need, &edges, priority) {
        for &(_, _, bi) in &edges {
            orders[bi] = BondOrder::Single;
        }
        for bi in chosen {
            orders[bi] = BondOrder::Double;
        }
    }
    orders
}

/// Marks rings whose pi-electron count is 4n+2, iterating so fused systems
/// are picked up, then trying pairs of fused rings as one envelope.
pub(crate) fn perceive(mol: &mut Molecule) {
    if mol.rings.is_empty() {
        return;
    }
    let ring_bonds: Vec<Vec<usize>> = mol
        .rings
        .iter()
        .map(|ring| {
            (0..ring.len())
                .filter_map(|i| mol.bond_between(ring[i], ring[(i + 1) % ring.len()]))
                .collect()
        })
        .collect();
    let mut flags = vec![false; mol.bonds.len()];
    let mut aromatic_ring = vec![false; mol.rings.len()];
    loop {
        let mut changed = false;
        for (ri, ring) in mol.rings.iter().enumerate() {
            if aromatic_ring[ri] {
                continue;
            }
            if ring_is_aromatic(mol, ring, &ring_bonds[ri], &flags) {
                aromatic_ring[ri] = true;
                for &bi in &ring_bonds[ri] {
                    flags[bi] = true;
                }
                changed = true;
            }
        }
        if !changed {
            for i in 0..mol.rings.len() {
                for j in i + 1..mol.rings.len() {
                    if aromatic_ring[i] || aromatic_ring[j] {
                        continue;
                    }
                    if !ring_bonds[i].iter().any(|b| ring_bonds[j].contains(b)) {
                        continue;
                    }
                    let mut atoms: Vec<usize> = mol.rings[i].clone();
                    for &a in &mol.rings[j] {
                        if !atoms.contains(&a) {
                            atoms.push(a);
                        }
                    }
                    let mut bonds = ring_bonds[i].clone();
                    for &b in &ring_bonds[j] {
                        if !bonds.contains(&b) {
                            bonds.push(b);
                        }
                    }
                    if ring_is_aromatic(mol, &atoms, &bonds, &flags) {
                        aromatic_ring[i] = true;
                        aromatic_ring[j] = true;
                        for &bi in &bonds {
                            flags[bi] = true;
                        }
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    for (bi, &f) in flags.iter().enumerate() {
        if f {
            let (a, b) = (mol.bonds[bi].begin, mol.bonds[bi].end);
            mol.bonds[bi].aromatic = true;
            mol.atoms[a].aromatic = true;
            mol.atoms[b].aromatic = true;
        }
    }
}

fn ring_is_aromatic(mol: &Molecule, atoms: &[usize], bonds: &[usize], flags: &[bool]) -> bool {
    let mut electrons = 0u32;
    for &u in atoms {
        let atom = mol.atom(u);
        let mut doubles = mol
            .neighbors(u)
            .iter()
            .filter(|&&(_, bi)| mol.bonds()[bi].order != BondOrder::Single);
        let first = doubles.next();
        if doubles.next().is_some() {
            return false;
        }
        match first {
            Some(&(w, bi)) => {
                if mol.bonds()[bi].order == BondOrder::Triple {
                    return false;
                }
                if bonds.contains(&bi) || flags[bi] {
                    electrons += 1;
                } else if matches!(mol.atom(w).element, Element::O | Element::S | Element::N)
                    && !atoms.contains(&w)
                {
                    // exocyclic C=O style bond contributes nothing
                } else {
                    return false;
                }
            }
            None => {
                let valence = mol.bond_order_sum(u) + mol.total_h(u);
                let contrib = match (atom.element, atom.formal_charge) {
                    (Element::N | Element::P, 0) if valence == 3 => 2,
                    (Element::O | Element::S, 0) if valence == 2 => 2,
                    (Element::C, -1) => 2,
                    (Element::C, 1) | (Element::B, 0) => 0,
                    _ => return false,
                };
                electrons += contrib;
            }
        }
    }
    electrons % 4 == 2
}
