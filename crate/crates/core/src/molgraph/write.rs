use rand::seq::SliceRandom;
use rand::Rng;

use super::element::Element;
use super::{aromatic, BondOrder, Molecule};

/// Kekulé SMILES with traversal driven by `priority` (lower first): the root
/// is the lowest-priority atom and branches follow neighbor priority.
pub fn smiles_with_priority(mol: &Molecule, priority: &[usize]) -> String {
    let orders = aromatic::kekule_orders(mol, priority);
    write(mol, priority, &orders)
}

/// A valid SMILES for `mol` with randomized root, branch order and Kekulé
/// assignment.
pub fn random_smiles<R: Rng + ?Sized>(mol: &Molecule, rng: &mut R) -> String {
    let mut priority: Vec<usize> = (0..mol.atom_count()).collect();
    priority.shuffle(rng);
    smiles_with_priority(mol, &priority)
}

struct Layout {
    children: Vec<Vec<(usize, usize)>>,
    ring_open: Vec<Vec<usize>>,
    ring_close: Vec<Vec<usize>>,
}

fn layout(mol: &Molecule, priority: &[usize], root: usize) -> Layout {
    let n = mol.atom_count();
    let mut out = Layout {
        children: vec![Vec::new(); n],
        ring_open: vec![Vec::new(); n],
        ring_close: vec![Vec::new(); n],
    };
    let mut visited = vec![false; n];
    let mut bond_used = vec![false; mol.bonds().len()];
    // explicit stack of (atom, sorted neighbor list, cursor)
    let sorted = |u: usize| {
        let mut v: Vec<(usize, usize)> = mol.neighbors(u).to_vec();
        v.sort_by_key(|&(a, _)| priority[a]);
        v
    };
    visited[root] = true;
    let mut stack: Vec<(usize, Vec<(usize, usize)>, usize)> = vec![(root, sorted(root), 0)];
    while let Some(top) = stack.last_mut() {
        let (u, ref nbrs, ref mut cursor) = *top;
        if *cursor >= nbrs.len() {
            stack.pop();
            continue;
        }
        let (v, bi) = nbrs[*cursor];
        *cursor += 1;
        if bond_used[bi] {
            continue;
        }
        bond_used[bi] = true;
        if visited[v] {
            out.ring_open[v].push(bi);
            out.ring_close[u].push(bi);
        } else {
            visited[v] = true;
            out.children[u].push((v, bi));
            let next = sorted(v);
            stack.push((v, next, 0));
        }
    }
    out
}

pub(crate) fn write(mol: &Molecule, priority: &[usize], orders: &[BondOrder]) -> String {
    let n = mol.atom_count();
    let root = (0..n).min_by_key(|&i| priority[i]).unwrap_or(0);
    let lay = layout(mol, priority, root);
    let mut used = vec![0u8; n];
    for (b, o) in mol.bonds().iter().zip(orders) {
        used[b.begin] += o.valence();
        used[b.end] += o.valence();
    }
    let mut out = String::with_capacity(n * 2);
    let mut digit_of = vec![0u32; mol.bonds().len()];
    let mut digits_in_use: Vec<bool> = vec![false; 100];

    enum Step {
        Atom(usize, Option<usize>),
        Open,
        Close,
    }
    let mut stack = vec![Step::Atom(root, None)];
    while let Some(step) = stack.pop() {
        match step {
            Step::Close => out.push(')'),
            Step::Atom(u, via) => {
                if let Some(bi) = via {
                    out.push_str(bond_symbol(orders[bi]));
                }
                write_atom(&mut out, mol, u, used[u]);
                let mut freed = Vec::new();
                for &bi in &lay.ring_close[u] {
                    push_digit(&mut out, digit_of[bi]);
                    freed.push(digit_of[bi]);
                }
                for &bi in &lay.ring_open[u] {
                    let d = (1..100).find(|&d| !digits_in_use[d as usize]).unwrap_or(99);
                    digits_in_use[d as usize] = true;
                    digit_of[bi] = d;
                    out.push_str(bond_symbol(orders[bi]));
                    push_digit(&mut out, d);
                }
                for d in freed {
                    digits_in_use[d as usize] = false;
                }
                let kids = &lay.children[u];
                // pushed in reverse so the first child is written first
                for (i, &(c, bi)) in kids.iter().enumerate().rev() {
                    if i + 1 < kids.len() {
                        stack.push(Step::Close);
                        stack.push(Step::Atom(c, Some(bi)));
                        stack.push(Step::Open);
                    } else {
                        stack.push(Step::Atom(c, Some(bi)));
                    }
                }
            }
            Step::Open => out.push('('),
        }
    }
    out
}

fn bond_symbol(order: BondOrder) -> &'static str {
    match order {
        BondOrder::Single | BondOrder::Aromatic => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
    }
}

fn push_digit(out: &mut String, d: u32) {
    if d < 10 {
        out.push(char::from(b'0' + d as u8));
    } else {
        out.push('%');
        out.push_str(&format!("{d:02}"));
    }
}

fn write_atom(out: &mut String, mol: &Molecule, u: usize, used: u8) {
    let atom = mol.atom(u);
    let h = mol.total_h(u);
    let plain = atom.formal_charge == 0
        && atom.element != Element::H
        && atom.element.default_valence_for(used).map(|v| v - used) == Some(h);
    if plain {
        out.push_str(atom.element.symbol());
        return;
    }
    out.push('[');
    out.push_str(atom.element.symbol());
    match h {
        0 => {}
        1 => out.push('H'),
        k => {
            out.push('H');
            out.push_str(&k.to_string());
        }
    }
    match atom.formal_charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        q if q > 0 => out.push_str(&format!("+{q}")),
        q => out.push_str(&format!("-{}", -q)),
    }
    out.push(']');
}
