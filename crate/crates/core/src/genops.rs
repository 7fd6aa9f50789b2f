//! Graph-level mutation and crossover operators.

use std::collections::{HashSet, VecDeque};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::chemclass::{classify_amine, AmineType};
use crate::molgraph::{canonical_smiles, Atom, BondOrder, Element, Molecule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MutationKind {
    AppendAtom,
    InsertAtom,
    ChangeBondOrder,
    AddRingBond,
    RemoveRingBond,
    BridgeBicyclic,
}

impl MutationKind {
    pub const ALL: [MutationKind; 6] = [
        MutationKind::AppendAtom,
        MutationKind::InsertAtom,
        MutationKind::ChangeBondOrder,
        MutationKind::AddRingBond,
        MutationKind::RemoveRingBond,
        MutationKind::BridgeBicyclic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MutationKind::AppendAtom => "append",
            MutationKind::InsertAtom => "insert",
            MutationKind::ChangeBondOrder => "bond_order",
            MutationKind::AddRingBond => "add_ring",
            MutationKind::RemoveRingBond => "remove_ring",
            MutationKind::BridgeBicyclic => "bridge",
        }
    }

    fn index(self) -> usize {
        MutationKind::ALL.iter().position(|&k| k == self).unwrap()
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum Rejected {
    #[error("no applicable site")]
    NoApplicableSite,
    #[error("no acyclic single bond to cut")]
    NoCutBond,
    #[error("valence violation")]
    ValenceViolation,
    #[error("heavy-atom cap exceeded")]
    TooLarge,
    #[error("offspring is not an amine")]
    NotAmine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MutationConfig {
    /// Selection weights indexed like [`MutationKind::ALL`].
    pub weights: [f64; 6],
    pub alphabet: Vec<Element>,
    pub max_heavy_atoms: usize,
    pub p_cross: f64,
    pub retry_budget: usize,
    pub require_amine: bool,
    pub fallback_to_mutation: bool,
}

impl Default for MutationConfig {
    fn default() -> Self {
        MutationConfig {
            weights: [1.0; 6],
            alphabet: vec![Element::C, Element::N, Element::O],
            max_heavy_atoms: 22,
            p_cross: 0.5,
            retry_budget: 10,
            require_amine: true,
            fallback_to_mutation: true,
        }
    }
}

impl MutationConfig {
    pub fn weight(&self, kind: MutationKind) -> f64 {
        self.weights[kind.index()]
    }

    pub fn set_weight(&mut self, kind: MutationKind, w: f64) {
        self.weights[kind.index()] = w;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpStats {
    pub attempted: u64,
    pub succeeded: u64,
    pub rejected_valence: u64,
    pub rejected_not_amine: u64,
    pub rejected_no_site: u64,
    pub rejected_size: u64,
}

impl OpStats {
    pub fn record<T>(&mut self, outcome: &Result<T, Rejected>) {
        self.attempted += 1;
        match outcome {
            Ok(_) => self.succeeded += 1,
            Err(Rejected::ValenceViolation) => self.rejected_valence += 1,
            Err(Rejected::NotAmine) => self.rejected_not_amine += 1,
            Err(Rejected::NoApplicableSite | Rejected::NoCutBond) => self.rejected_no_site += 1,
            Err(Rejected::TooLarge) => self.rejected_size += 1,
        }
    }

    pub fn rejected(&self) -> u64 {
        self.rejected_valence + self.rejected_not_amine + self.rejected_no_site + self.rejected_size
    }

    pub fn merge(&mut self, other: &OpStats) {
        self.attempted += other.attempted;
        self.succeeded += other.succeeded;
        self.rejected_valence += other.rejected_valence;
        self.rejected_not_amine += other.rejected_not_amine;
        self.rejected_no_site += other.rejected_no_site;
        self.rejected_size += other.rejected_size;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Site {
    Append { atom: usize, element: Element },
    Insert { bond: usize, element: Element },
    BondOrder { bond: usize, order: BondOrder },
    AddRing { a: usize, b: usize },
    RemoveRing { bond: usize },
    Bridge { a: usize, b: usize, path: Vec<Element> },
}

fn distances_from(mol: &Molecule, src: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; mol.atom_count()];
    dist[src] = 0;
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        for &(v, _) in mol.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

fn sites(mol: &Molecule, kind: MutationKind, config: &MutationConfig) -> Vec<Site> {
    let n = mol.atom_count();
    let free = |i: usize| mol.free_valence(i);
    let mut out = Vec::new();
    match kind {
        MutationKind::AppendAtom => {
            for atom in (0..n).filter(|&i| free(i) >= 1) {
                for &element in &config.alphabet {
                    out.push(Site::Append { atom, element });
                }
            }
        }
        MutationKind::InsertAtom => {
            for (bond, b) in mol.bonds().iter().enumerate() {
                if b.order == BondOrder::Single {
                    for &element in config.alphabet.iter().filter(|e| e.valences(0)[0] >= 2) {
                        out.push(Site::Insert { bond, element });
                    }
                }
            }
        }
        MutationKind::ChangeBondOrder => {
            for (bond, b) in mol.bonds().iter().enumerate() {
                let cur = b.order.valence();
                for new in 1..=3u8 {
                    if new == cur {
                        continue;
                    }
                    if new > cur {
                        let need = new - cur;
                        if free(b.begin) < need || free(b.end) < need {
                            continue;
                        }
                    }
                    out.push(Site::BondOrder {
                        bond,
                        order: BondOrder::from_valence(new).unwrap(),
                    });
                }
            }
        }
        MutationKind::AddRingBond => {
            for a in (0..n).filter(|&i| free(i) >= 1) {
                let dist = distances_from(mol, a);
                for b in (a + 1..n).filter(|&j| free(j) >= 1) {
                    // ring sizes 3..=6
                    if (2..=5).contains(&dist[b]) {
                        out.push(Site::AddRing { a, b });
                    }
                }
            }
        }
        MutationKind::RemoveRingBond => {
            for bond in 0..mol.bonds().len() {
                if mol.bond_in_ring(bond) {
                    out.push(Site::RemoveRing { bond });
                }
            }
        }
        MutationKind::BridgeBicyclic => {
            let mut pairs = Vec::new();
            for ring in mol.rings() {
                for (x, &a) in ring.iter().enumerate() {
                    for &b in &ring[x + 1..] {
                        let (a, b) = (a.min(b), a.max(b));
                        if free(a) >= 1 && free(b) >= 1 && mol.bond_between(a, b).is_none() {
                            pairs.push((a, b));
                        }
                    }
                }
            }
            pairs.sort_unstable();
            pairs.dedup();
            let linkers: Vec<Element> = config
                .alphabet
                .iter()
                .copied()
                .filter(|e| e.valences(0)[0] >= 2)
                .collect();
            for (a, b) in pairs {
                for &x in &linkers {
                    out.push(Site::Bridge { a, b, path: vec![x] });
                    for &y in &linkers {
                        out.push(Site::Bridge { a, b, path: vec![x, y] });
                    }
                }
            }
        }
    }
    out
}

fn build(
    atoms: Vec<Atom>,
    bonds: Vec<(usize, usize, BondOrder)>,
    config: &MutationConfig,
) -> Result<Molecule, Rejected> {
    let heavy = atoms.iter().filter(|a| a.element != Element::H).count();
    if heavy > config.max_heavy_atoms {
        return Err(Rejected::TooLarge);
    }
    Molecule::from_parts(atoms, bonds).map_err(|_| Rejected::ValenceViolation)
}

fn apply(mol: &Molecule, site: &Site, config: &MutationConfig) -> Result<Molecule, Rejected> {
    let (mut atoms, mut bonds) = mol.to_parts();
    match *site {
        Site::Append { atom, element } => {
            atoms.push(Atom::new(element));
            bonds.push((atom, atoms.len() - 1, BondOrder::Single));
        }
        Site::Insert { bond, element } => {
            let (a, b, _) = bonds[bond];
            atoms.push(Atom::new(element));
            let x = atoms.len() - 1;
            bonds[bond] = (a, x, BondOrder::Single);
            bonds.push((x, b, BondOrder::Single));
        }
        Site::BondOrder { bond, order } => bonds[bond].2 = order,
        Site::AddRing { a, b } => bonds.push((a, b, BondOrder::Single)),
        Site::RemoveRing { bond } => {
            bonds.remove(bond);
        }
        Site::Bridge { a, b, ref path } => {
            let mut prev = a;
            for &e in path {
                atoms.push(Atom::new(e));
                let x = atoms.len() - 1;
                bonds.push((prev, x, BondOrder::Single));
                prev = x;
            }
            bonds.push((prev, b, BondOrder::Single));
        }
    }
    build(atoms, bonds, config)
}

/// Applies one random instance of `kind`.
pub fn apply_mutation<R: Rng + ?Sized>(
    mol: &Molecule,
    kind: MutationKind,
    rng: &mut R,
    config: &MutationConfig,
) -> Result<Molecule, Rejected> {
    let s = sites(mol, kind, config);
    let site = s.choose(rng).ok_or(Rejected::NoApplicableSite)?;
    apply(mol, site, config)
}

/// Every molecule reachable by one application of `kind`, including
/// duplicates from symmetric sites. Rejected edits are skipped.
pub fn enumerate_mutations(
    mol: &Molecule,
    kind: MutationKind,
    config: &MutationConfig,
) -> Vec<Molecule> {
    sites(mol, kind, config)
        .iter()
        .filter_map(|s| apply(mol, s, config).ok())
        .collect()
}

/// Breadth-first closure of `seeds` under every mutation kind, capped at
/// `config.max_heavy_atoms` and stopping after `limit` distinct molecules.
/// Output is in discovery order, deduplicated by canonical SMILES.
pub fn enumerate_space(seeds: &[Molecule], config: &MutationConfig, limit: usize) -> Vec<Molecule> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for m in seeds {
        if out.len() < limit && seen.insert(canonical_smiles(m)) {
            out.push(m.clone());
            queue.push_back(out.len() - 1);
        }
    }
    while let Some(i) = queue.pop_front() {
        let mol = out[i].clone();
        for kind in MutationKind::ALL {
            let mut children: Vec<(String, Molecule)> = enumerate_mutations(&mol, kind, config)
                .into_iter()
                .map(|c| (canonical_smiles(&c), c))
                .collect();
            children.sort_by(|a, b| a.0.cmp(&b.0));
            for (key, child) in children {
                if out.len() >= limit {
                    return out;
                }
                if seen.insert(key) {
                    out.push(child);
                    queue.push_back(out.len() - 1);
                }
            }
        }
    }
    out
}

/// Picks a kind by configured weight among kinds with at least one site,
/// then one of its sites uniformly.
pub fn mutate<R: Rng + ?Sized>(
    mol: &Molecule,
    rng: &mut R,
    config: &MutationConfig,
) -> Result<Molecule, Rejected> {
    let mut options: Vec<(f64, Vec<Site>)> = Vec::new();
    for kind in MutationKind::ALL {
        let w = config.weight(kind);
        if w > 0.0 {
            let s = sites(mol, kind, config);
            if !s.is_empty() {
                options.push((w, s));
            }
        }
    }
    if options.is_empty() {
        return Err(Rejected::NoApplicableSite);
    }
    let dist = WeightedIndex::new(options.iter().map(|o| o.0)).expect("positive weights");
    let chosen = &options[dist.sample(rng)].1;
    let site = chosen.choose(rng).expect("nonempty");
    apply(mol, site, config)
}

fn cut_bonds(mol: &Molecule) -> Vec<usize> {
    (0..mol.bonds().len())
        .filter(|&bi| {
            let b = &mol.bonds()[bi];
            b.order == BondOrder::Single
                && !b.aromatic
                && !mol.bond_in_ring(bi)
                && mol.atom(b.begin).element != Element::H
                && mol.atom(b.end).element != Element::H
        })
        .collect()
}

/// Atoms on the `root` side after removing bond `cut`, with `root` first.
fn fragment(mol: &Molecule, cut: usize, root: usize) -> Vec<usize> {
    let mut seen = vec![false; mol.atom_count()];
    seen[root] = true;
    let mut order = vec![root];
    let mut i = 0;
    while i < order.len() {
        let u = order[i];
        i += 1;
        for &(v, b) in mol.neighbors(u) {
            if b != cut && !seen[v] {
                seen[v] = true;
                order.push(v);
            }
        }
    }
    order
}

fn pick_fragment<R: Rng + ?Sized>(mol: &Molecule, rng: &mut R) -> Option<Vec<usize>> {
    let bonds = cut_bonds(mol);
    let &cut = bonds.choose(rng)?;
    let b = &mol.bonds()[cut];
    let root = if rng.gen_bool(0.5) { b.begin } else { b.end };
    Some(fragment(mol, cut, root))
}

/// Cuts a random acyclic single bond in each parent and joins one side of
/// each cut through a new single bond between the former cut atoms.
pub fn crossover<R: Rng + ?Sized>(
    a: &Molecule,
    b: &Molecule,
    rng: &mut R,
    config: &MutationConfig,
) -> Result<Molecule, Rejected> {
    let fa = pick_fragment(a, rng).ok_or(Rejected::NoCutBond)?;
    let fb = pick_fragment(b, rng).ok_or(Rejected::NoCutBond)?;
    let (atoms_a, bonds_a) = a.to_parts();
    let (atoms_b, bonds_b) = b.to_parts();
    let mut atoms = Vec::with_capacity(fa.len() + fb.len());
    let mut bonds = Vec::new();
    let mut map_a = vec![usize::MAX; a.atom_count()];
    for &i in &fa {
        map_a[i] = atoms.len();
        atoms.push(atoms_a[i].clone());
    }
    let mut map_b = vec![usize::MAX; b.atom_count()];
    for &i in &fb {
        map_b[i] = atoms.len();
        atoms.push(atoms_b[i].clone());
    }
    for (map, parent_bonds) in [(&map_a, &bonds_a), (&map_b, &bonds_b)] {
        for &(x, y, o) in parent_bonds {
            if map[x] != usize::MAX && map[y] != usize::MAX {
                bonds.push((map[x], map[y], o));
            }
        }
    }
    bonds.push((map_a[fa[0]], map_b[fb[0]], BondOrder::Single));
    build(atoms, bonds, config)
}

fn offspring<R: Rng + ?Sized>(
    pool: &[Molecule],
    rng: &mut R,
    config: &MutationConfig,
    stats: &mut OpStats,
) -> Option<Molecule> {
    let check = |r: Result<Molecule, Rejected>| {
        r.and_then(|m| {
            if config.require_amine && classify_amine(&m) == AmineType::NotAmine {
                Err(Rejected::NotAmine)
            } else {
                Ok(m)
            }
        })
    };
    for _ in 0..config.retry_budget {
        let outcome = if rng.gen_bool(config.p_cross.clamp(0.0, 1.0)) {
            let a = pool.choose(rng).unwrap();
            let b = pool.choose(rng).unwrap();
            check(crossover(a, b, rng, config))
        } else {
            check(mutate(pool.choose(rng).unwrap(), rng, config))
        };
        stats.record(&outcome);
        if let Ok(m) = outcome {
            return Some(m);
        }
    }
    if config.fallback_to_mutation && config.p_cross > 0.0 {
        for _ in 0..config.retry_budget {
            let outcome = check(mutate(pool.choose(rng).unwrap(), rng, config));
            stats.record(&outcome);
            if let Ok(m) = outcome {
                return Some(m);
            }
        }
    }
    None
}

/// Up to `n` offspring from parents drawn uniformly from `pool`. Each
/// offspring uses its own RNG stream seeded from `rng`.
pub fn diversify_batch<R: Rng + ?Sized>(
    pool: &[Molecule],
    n: usize,
    rng: &mut R,
    config: &MutationConfig,
) -> (Vec<Molecule>, OpStats) {
    let mut stats = OpStats::default();
    let mut out = Vec::with_capacity(n);
    if pool.is_empty() {
        return (out, stats);
    }
    for _ in 0..n {
        let mut child_rng = ChaCha8Rng::seed_from_u64(rng.gen());
        if let Some(m) = offspring(pool, &mut child_rng, config, &mut stats) {
            out.push(m);
        }
    }
    (out, stats)
}
