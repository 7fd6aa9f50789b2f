//! Amine detection and the five-way amine classification.

use std::fmt;
use std::str::FromStr;

use crate::molgraph::{BondOrder, Element, Molecule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum AmineType {
    Primary,
    Secondary,
    Tertiary,
    Cyclic,
    Poly,
    NotAmine,
}

impl AmineType {
    pub const AMINES: [AmineType; 5] = [
        AmineType::Primary,
        AmineType::Secondary,
        AmineType::Tertiary,
        AmineType::Cyclic,
        AmineType::Poly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AmineType::Primary => "primary",
            AmineType::Secondary => "secondary",
            AmineType::Tertiary => "tertiary",
            AmineType::Cyclic => "cyclic",
            AmineType::Poly => "poly",
            AmineType::NotAmine => "not-amine",
        }
    }
}

impl fmt::Display for AmineType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AmineType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        [AmineType::NotAmine]
            .into_iter()
            .chain(AmineType::AMINES)
            .find(|t| t.name() == lower)
            .ok_or_else(|| format!("unknown amine type '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AmineSite {
    pub atom_index: usize,
    pub h_count: u8,
    pub in_ring: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Restriction {
    PrimarySecondary,
    TertiaryCyclicPoly,
    #[default]
    None,
}

impl Restriction {
    pub const ALL: [Restriction; 3] = [
        Restriction::PrimarySecondary,
        Restriction::TertiaryCyclicPoly,
        Restriction::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Restriction::PrimarySecondary => "primary-secondary",
            Restriction::TertiaryCyclicPoly => "tertiary-cyclic-poly",
            Restriction::None => "none",
        }
    }
}

impl fmt::Display for Restriction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Restriction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Restriction::ALL
            .into_iter()
            .find(|r| r.name() == lower)
            .ok_or_else(|| format!("unknown restriction '{s}'"))
    }
}

/// A nitrogen is an amine nitrogen when it carries only single bonds, is not
/// aromatic, is neutral, and no neighboring carbon has a double bond to O or
/// S (amides, thioamides, carbamates).
fn is_amine_nitrogen(mol: &Molecule, i: usize) -> bool {
    let atom = mol.atom(i);
    if atom.element != Element::N || atom.aromatic || atom.formal_charge != 0 {
        return false;
    }
    mol.neighbors(i).iter().all(|&(j, b)| {
        if mol.bonds()[b].kind() != BondOrder::Single {
            return false;
        }
        if mol.atom(j).element != Element::C {
            return true;
        }
        !mol.neighbors(j).iter().any(|&(k, cb)| {
            mol.bonds()[cb].kind() == BondOrder::Double
                && matches!(mol.atom(k).element, Element::O | Element::S)
        })
    })
}

pub fn find_amine_sites(mol: &Molecule) -> Vec<AmineSite> {
    (0..mol.atom_count())
        .filter(|&i| is_amine_nitrogen(mol, i))
        .map(|i| AmineSite {
            atom_index: i,
            h_count: mol.total_h(i),
            in_ring: mol.atom(i).in_ring,
        })
        .collect()
}

pub fn classify_sites(sites: &[AmineSite]) -> AmineType {
    match sites {
        [] => AmineType::NotAmine,
        _ if sites.iter().any(|s| s.in_ring) => AmineType::Cyclic,
        [site] => match site.h_count {
            0 => AmineType::Tertiary,
            1 => AmineType::Secondary,
            _ => AmineType::Primary,
        },
        _ => AmineType::Poly,
    }
}

pub fn classify_amine(mol: &Molecule) -> AmineType {
    classify_sites(&find_amine_sites(mol))
}

pub fn matches_restriction(t: AmineType, r: Restriction) -> bool {
    match r {
        Restriction::PrimarySecondary => matches!(t, AmineType::Primary | AmineType::Secondary),
        Restriction::TertiaryCyclicPoly => {
            matches!(t, AmineType::Tertiary | AmineType::Cyclic | AmineType::Poly)
        }
        Restriction::None => t != AmineType::NotAmine,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;

    fn class(s: &str) -> AmineType {
        classify_amine(&parse_smiles(s).unwrap())
    }

    #[test]
    fn site_counts() {
        let mea = find_amine_sites(&parse_smiles("NCCO").unwrap());
        assert_eq!(mea.len(), 1);
        assert_eq!(mea[0].h_count, 2);
        assert_eq!(find_amine_sites(&parse_smiles("NCCNCCN").unwrap()).len(), 3);
        assert!(find_amine_sites(&parse_smiles("CCO").unwrap()).is_empty());
    }

    #[test]
    fn non_amine_nitrogens() {
        for s in ["CC(=O)N", "CC#N", "CC=NC", "C[N+](=O)[O-]", "c1ccncc1", "NC(=S)C", "C[NH3+]"] {
            assert_eq!(class(s), AmineType::NotAmine, "{s}");
        }
        assert_eq!(class("Nc1ccccc1"), AmineType::Primary);
        assert_eq!(class("CC(=O)NCCN"), AmineType::Primary);
    }

    #[test]
    fn precedence() {
        assert_eq!(class("CN(CCO)CCO"), AmineType::Tertiary);
        assert_eq!(class("C1CNCCN1"), AmineType::Cyclic);
        assert_eq!(class("NCCNCCN"), AmineType::Poly);
        assert_eq!(class("NCCN1CCCC1"), AmineType::Cyclic);
        assert_eq!(class("CCNCC"), AmineType::Secondary);
        assert_eq!(class("NC1CCCCC1"), AmineType::Primary);
    }

    #[test]
    fn restrictions() {
        assert!(matches_restriction(AmineType::Primary, Restriction::PrimarySecondary));
        assert!(!matches_restriction(AmineType::Cyclic, Restriction::PrimarySecondary));
        assert!(matches_restriction(AmineType::Poly, Restriction::None));
        assert!(matches_restriction(AmineType::Poly, Restriction::TertiaryCyclicPoly));
        assert!(!matches_restriction(AmineType::Secondary, Restriction::TertiaryCyclicPoly));
    }

    #[test]
    fn names_round_trip() {
        for t in AmineType::AMINES {
            assert_eq!(t.name().parse::<AmineType>().unwrap(), t);
        }
        for r in Restriction::ALL {
            assert_eq!(r.name().parse::<Restriction>().unwrap(), r);
        }
    }
}
