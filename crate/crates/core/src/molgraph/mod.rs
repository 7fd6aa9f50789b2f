//! Molecular graphs built from SMILES.
//!
//! A [`Molecule`] is an immutable, connected, valence-checked graph with
//! hydrogens held as per-atom counts. Aromatic input is kekulized on the way
//! in; aromaticity is then re-perceived from ring electron counts so that a
//! lowercase and a Kekulé spelling of the same structure end up identical.

mod aromatic;
mod canon;
mod element;
mod formula;
mod parse;
mod rings;
mod write;

use std::collections::HashSet;

use thiserror::Error;

pub use canon::{canonical_ranks, canonical_smiles};
pub use element::Element;
pub use formula::{FormulaError, MolecularFormula};
pub use parse::{is_radical_free, parse_graph, parse_smiles, parse_valid, SmilesGraph};
pub use write::{random_smiles, smiles_with_priority};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("valence violation on atom {atom}: {msg}")]
    Valence { atom: usize, msg: String },
    #[error("disconnected structure")]
    Disconnected,
    #[error("unsupported element '{0}'")]
    UnsupportedElement(String),
    #[error("ring closure: {0}")]
    RingClosure(String),
}

impl ParseError {
    pub(crate) fn syntax(pos: usize, msg: impl Into<String>) -> Self {
        ParseError::Syntax {
            pos,
            msg: msg.into(),
        }
    }

    fn valence(atom: usize, msg: impl Into<String>) -> Self {
        ParseError::Valence {
            atom,
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Bond order counted against valence; aromatic input bonds count as
    /// their sigma part until kekulized.
    pub fn valence(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub fn from_valence(v: u8) -> Option<BondOrder> {
        match v {
            1 => Some(BondOrder::Single),
            2 => Some(BondOrder::Double),
            3 => Some(BondOrder::Triple),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub element: Element,
    pub formal_charge: i8,
    /// Hydrogen count written inside brackets; `None` for organic-subset atoms.
    pub explicit_h: Option<u8>,
    pub aromatic: bool,
    pub in_ring: bool,
}

impl Atom {
    pub fn new(element: Element) -> Self {
        Atom {
            element,
            formal_charge: 0,
            explicit_h: None,
            aromatic: false,
            in_ring: false,
        }
    }

    pub fn bracket(element: Element, hydrogens: u8, charge: i8) -> Self {
        Atom {
            element,
            formal_charge: charge,
            explicit_h: Some(hydrogens),
            aromatic: false,
            in_ring: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bond {
    pub begin: usize,
    pub end: usize,
    /// Kekulé order; never [`BondOrder::Aromatic`] inside a [`Molecule`].
    pub order: BondOrder,
    pub aromatic: bool,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.begin == atom {
            self.end
        } else {
            self.begin
        }
    }

    /// Order as seen by graph invariants: aromatic bonds share one code
    /// regardless of their Kekulé assignment.
    pub fn kind(&self) -> BondOrder {
        if self.aromatic {
            BondOrder::Aromatic
        } else {
            self.order
        }
    }
}

/// A validated molecular graph. Cheap to clone, never mutated after build.
#[derive(Debug, Clone)]
pub struct Molecule {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    implicit_h: Vec<u8>,
    adjacency: Vec<Vec<(usize, usize)>>,
    rings: Vec<Vec<usize>>,
    bond_in_ring: Vec<bool>,
}

impl Molecule {
    /// Builds a molecule from atoms and bonds, running the same checks the
    /// parser applies. Bonds may carry [`BondOrder::Aromatic`], in which case
    /// the aromatic system is kekulized.
    pub fn from_parts(
        atoms: Vec<Atom>,
        bonds: Vec<(usize, usize, BondOrder)>,
    ) -> Result<Molecule, ParseError> {
        if atoms.is_empty() {
            return Err(ParseError::syntax(0, "no atoms"));
        }
        let mut seen = HashSet::new();
        for &(a, b, _) in &bonds {
            if a >= atoms.len() || b >= atoms.len() {
                return Err(ParseError::syntax(0, "bond endpoint out of range"));
            }
            if a == b {
                return Err(ParseError::RingClosure(format!("atom {a} bonded to itself")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(ParseError::RingClosure(format!(
                    "duplicate bond between atoms {a} and {b}"
                )));
            }
        }
        if !is_connected(atoms.len(), bonds.iter().map(|&(a, b, _)| (a, b))) {
            return Err(ParseError::Disconnected);
        }

        let mut orders: Vec<BondOrder> = bonds.iter().map(|b| b.2).collect();
        if orders.contains(&BondOrder::Aromatic) || atoms.iter().any(|a| a.aromatic) {
            let pairs: Vec<(usize, usize)> = bonds.iter().map(|&(a, b, _)| (a, b)).collect();
            aromatic::kekulize_input(&atoms, &pairs, &mut orders)?;
        }
        let mut atoms = atoms;
        for atom in &mut atoms {
            atom.aromatic = false;
            atom.in_ring = false;
        }
        let bonds: Vec<Bond> = bonds
            .iter()
            .zip(&orders)
            .map(|(&(begin, end, _), &order)| Bond {
                begin,
                end,
                order,
                aromatic: false,
            })
            .collect();

        let implicit_h = assign_hydrogens(&atoms, &bonds)?;
        let (atoms, bonds, implicit_h) = fold_explicit_hydrogens(atoms, bonds, implicit_h);

        let mut mol = Molecule {
            adjacency: build_adjacency(atoms.len(), &bonds),
            atoms,
            bonds,
            implicit_h,
            rings: Vec::new(),
            bond_in_ring: Vec::new(),
        };
        mol.rings = rings::smallest_set_of_smallest_rings(&mol);
        mol.bond_in_ring = vec![false; mol.bonds.len()];
        for ring in &mol.rings {
            for i in 0..ring.len() {
                let (a, b) = (ring[i], ring[(i + 1) % ring.len()]);
                if let Some(bi) = mol.bond_between(a, b) {
                    mol.bond_in_ring[bi] = true;
                }
                mol.atoms[a].in_ring = true;
            }
        }
        aromatic::perceive(&mut mol);
        Ok(mol)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn heavy_atom_count(&self) -> usize {
        self.atoms
            .iter()
            .filter(|a| a.element != Element::H)
            .count()
    }

    pub fn implicit_h(&self, i: usize) -> u8 {
        self.implicit_h[i]
    }

    /// Implicit plus bracket hydrogens.
    pub fn total_h(&self, i: usize) -> u8 {
        self.implicit_h[i] + self.atoms[i].explicit_h.unwrap_or(0)
    }

    /// `(neighbor atom, bond index)` pairs.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency[a]
            .iter()
            .find(|&&(n, _)| n == b)
            .map(|&(_, bi)| bi)
    }

    pub fn bond_order_sum(&self, i: usize) -> u8 {
        self.adjacency[i]
            .iter()
            .map(|&(_, bi)| self.bonds[bi].order.valence())
            .sum()
    }

    /// Smallest set of smallest rings, each as atom indices in ring order.
    pub fn rings(&self) -> &[Vec<usize>] {
        &self.rings
    }

    pub fn bond_in_ring(&self, bond: usize) -> bool {
        self.bond_in_ring[bond]
    }

    pub fn molecular_formula(&self) -> MolecularFormula {
        MolecularFormula::of(self)
    }

    pub fn molecular_weight(&self) -> f64 {
        self.molecular_formula().weight()
    }

    /// Atoms and Kekulé bonds suitable for editing and feeding back into
    /// [`Molecule::from_parts`]. Derived flags are cleared.
    pub fn to_parts(&self) -> (Vec<Atom>, Vec<(usize, usize, BondOrder)>) {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                aromatic: false,
                in_ring: false,
                ..a.clone()
            })
            .collect();
        let bonds = self.bonds.iter().map(|b| (b.begin, b.end, b.order)).collect();
        (atoms, bonds)
    }

    /// Hydrogens that could be replaced by a new single bond without changing
    /// the atom's valence state. Bracket atoms have fixed hydrogen counts and
    /// never offer free valence.
    pub fn free_valence(&self, i: usize) -> u8 {
        if self.atoms[i].explicit_h.is_some() {
            0
        } else {
            self.implicit_h[i]
        }
    }
}

pub fn perceive_rings(mol: &Molecule) -> Vec<Vec<usize>> {
    mol.rings.clone()
}

fn build_adjacency(n: usize, bonds: &[Bond]) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); n];
    for (bi, b) in bonds.iter().enumerate() {
        adj[b.begin].push((b.end, bi));
        adj[b.end].push((b.begin, bi));
    }
    adj
}

pub(crate) fn is_connected(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> bool {
    if n == 0 {
        return true;
    }
    let mut adj = vec![Vec::new(); n];
    for (a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == n
}

fn assign_hydrogens(atoms: &[Atom], bonds: &[Bond]) -> Result<Vec<u8>, ParseError> {
    let mut used = vec![0u8; atoms.len()];
    for b in bonds {
        used[b.begin] += b.order.valence();
        used[b.end] += b.order.valence();
    }
    let mut implicit = vec![0u8; atoms.len()];
    for (i, atom) in atoms.iter().enumerate() {
        match atom.explicit_h {
            Some(h) => {
                let total = used[i] + h;
                if !atom.element.valences(atom.formal_charge).contains(&total) {
                    return Err(ParseError::valence(
                        i,
                        format!(
                            "{}{:+} with valence {total}",
                            atom.element, atom.formal_charge
                        ),
                    ));
                }
            }
            None => {
                let allowed = atom.element.valences(atom.formal_charge);
                match allowed.into_iter().find(|&v| v >= used[i]) {
                    Some(v) => implicit[i] = v - used[i],
                    None => {
                        return Err(ParseError::valence(
                            i,
                            format!("{} with {} bonds", atom.element, used[i]),
                        ))
                    }
                }
            }
        }
    }
    Ok(implicit)
}

/// Removes neutral, singly bonded `[H]` atoms and adds them to their heavy
/// neighbor's hydrogen count.
fn fold_explicit_hydrogens(
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    implicit_h: Vec<u8>,
) -> (Vec<Atom>, Vec<Bond>, Vec<u8>) {
    let n = atoms.len();
    let mut degree = vec![0usize; n];
    for b in &bonds {
        degree[b.begin] += 1;
        degree[b.end] += 1;
    }
    let mut removable = vec![false; n];
    let mut gained = vec![0u8; n];
    for b in &bonds {
        for (h, heavy) in [(b.begin, b.end), (b.end, b.begin)] {
            let a = &atoms[h];
            if a.element == Element::H
                && a.formal_charge == 0
                && a.explicit_h.unwrap_or(0) == 0
                && degree[h] == 1
                && b.order == BondOrder::Single
                && atoms[heavy].element != Element::H
            {
                removable[h] = true;
                gained[heavy] += 1;
            }
        }
    }
    if !removable.iter().any(|&r| r) {
        return (atoms, bonds, implicit_h);
    }
    let mut remap = vec![usize::MAX; n];
    let mut new_atoms = Vec::new();
    let mut new_implicit = Vec::new();
    for i in 0..n {
        if !removable[i] {
            remap[i] = new_atoms.len();
            new_atoms.push(atoms[i].clone());
            new_implicit.push(implicit_h[i]);
        }
    }
    let new_bonds: Vec<Bond> = bonds
        .iter()
        .filter(|b| !removable[b.begin] && !removable[b.end])
        .map(|b| Bond {
            begin: remap[b.begin],
            end: remap[b.end],
            ..*b
        })
        .collect();
    let mut used = vec![0u8; new_atoms.len()];
    for b in &new_bonds {
        used[b.begin] += b.order.valence();
        used[b.end] += b.order.valence();
    }
    for i in 0..n {
        if removable[i] || gained[i] == 0 {
            continue;
        }
        let j = remap[i];
        let atom = &mut new_atoms[j];
        let total = implicit_h[i] + atom.explicit_h.unwrap_or(0) + gained[i];
        match atom.explicit_h {
            Some(_) => atom.explicit_h = Some(total),
            None => {
                let default = atom
                    .element
                    .valences(atom.formal_charge)
                    .into_iter()
                    .find(|&v| v >= used[j])
                    .map(|v| v - used[j]);
                if default == Some(total) {
                    new_implicit[j] = total;
                } else {
                    atom.explicit_h = Some(total);
                    new_implicit[j] = 0;
                }
            }
        }
    }
    (new_atoms, new_bonds, new_implicit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mea_hydrogens() {
        let mol = parse_smiles("NCCO").unwrap();
        assert_eq!(mol.heavy_atom_count(), 4);
        let h: Vec<u8> = (0..4).map(|i| mol.implicit_h(i)).collect();
        assert_eq!(h, vec![2, 2, 2, 1]);
    }

    #[test]
    fn piperazine_ring() {
        let mol = parse_smiles("C1CNCCN1").unwrap();
        assert_eq!(mol.atom_count(), 6);
        assert_eq!(mol.rings().len(), 1);
        assert_eq!(mol.rings()[0].len(), 6);
        let ring_n = mol
            .atoms()
            .iter()
            .filter(|a| a.element == Element::N && a.in_ring)
            .count();
        assert_eq!(ring_n, 2);
    }

    #[test]
    fn explicit_hydrogen_atoms_fold_into_counts() {
        let a = parse_smiles("[H]N([H])CCO").unwrap();
        assert_eq!(a.atom_count(), 4);
        assert_eq!(canonical_smiles(&a), canonical_smiles(&parse_smiles("NCCO").unwrap()));
        let h2 = parse_smiles("[H][H]").unwrap();
        assert_eq!(h2.atom_count(), 2);
    }

    #[test]
    fn from_parts_rejects_bad_graphs() {
        let c = Atom::new(Element::C);
        assert_eq!(
            Molecule::from_parts(vec![c.clone(), c.clone()], vec![]).unwrap_err(),
            ParseError::Disconnected
        );
        assert!(matches!(
            Molecule::from_parts(vec![c.clone()], vec![(0, 0, BondOrder::Single)]),
            Err(ParseError::RingClosure(_))
        ));
        let n = Atom::new(Element::N);
        assert!(matches!(
            Molecule::from_parts(
                vec![n.clone(), c.clone()],
                vec![(0, 1, BondOrder::Triple)]
            ),
            Ok(_)
        ));
        let o = Atom::new(Element::O);
        assert!(matches!(
            Molecule::from_parts(vec![o, c], vec![(0, 1, BondOrder::Triple)]),
            Err(ParseError::Valence { .. })
        ));
    }

    #[test]
    fn free_valence_tracks_hydrogens() {
        let mol = parse_smiles("CN(C)C").unwrap();
        assert_eq!(mol.free_valence(1), 0);
        assert_eq!(mol.free_valence(0), 3);
        let ion = parse_smiles("C[NH3+]").unwrap();
        assert_eq!(ion.free_valence(1), 0);
    }
}
