use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::element::Element;
use super::Molecule;

/// Element counts including every hydrogen.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct MolecularFormula {
    counts: BTreeMap<Element, u32>,
}

impl MolecularFormula {
    pub fn of(mol: &Molecule) -> Self {
        let mut counts = BTreeMap::new();
        for (i, atom) in mol.atoms().iter().enumerate() {
            *counts.entry(atom.element).or_insert(0) += 1;
            let h = mol.total_h(i) as u32;
            if h > 0 {
                *counts.entry(Element::H).or_insert(0) += h;
            }
        }
        MolecularFormula { counts }
    }

    pub fn count(&self, element: Element) -> u32 {
        self.counts.get(&element).copied().unwrap_or(0)
    }

    pub fn weight(&self) -> f64 {
        self.counts
            .iter()
            .map(|(e, &c)| e.mass() * c as f64)
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Element, u32)> + '_ {
        self.counts.iter().map(|(&e, &c)| (e, c))
    }
}

/// Hill order: C, then H, then the rest alphabetically. Without carbon, all
/// elements alphabetically.
impl fmt::Display for MolecularFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut order: Vec<Element> = self.counts.keys().copied().collect();
        let has_carbon = self.count(Element::C) > 0;
        order.sort_by_key(|e| {
            let rank = match (has_carbon, e) {
                (true, Element::C) => 0,
                (true, Element::H) => 1,
                _ => 2,
            };
            (rank, e.symbol())
        });
        for e in order {
            let c = self.count(e);
            if c == 0 {
                continue;
            }
            f.write_str(e.symbol())?;
            if c > 1 {
                write!(f, "{c}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("malformed molecular formula '{0}'")]
pub struct FormulaError(pub String);

impl FromStr for MolecularFormula {
    type Err = FormulaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = s.trim().as_bytes();
        if bytes.is_empty() {
            return Err(FormulaError(s.into()));
        }
        let mut counts = BTreeMap::new();
        let mut i = 0;
        while i < bytes.len() {
            if !bytes[i].is_ascii_uppercase() {
                return Err(FormulaError(s.into()));
            }
            let mut j = i + 1;
            if j < bytes.len() && bytes[j].is_ascii_lowercase() {
                j += 1;
            }
            let sym = std::str::from_utf8(&bytes[i..j]).unwrap();
            let element = Element::from_symbol(sym).ok_or_else(|| FormulaError(s.into()))?;
            let mut k = j;
            while k < bytes.len() && bytes[k].is_ascii_digit() {
                k += 1;
            }
            let n: u32 = if k == j {
                1
            } else {
                std::str::from_utf8(&bytes[j..k])
                    .unwrap()
                    .parse()
                    .map_err(|_| FormulaError(s.into()))?
            };
            *counts.entry(element).or_insert(0) += n;
            i = k;
        }
        Ok(MolecularFormula { counts })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;

    fn formula(s: &str) -> String {
        parse_smiles(s).unwrap().molecular_formula().to_string()
    }

    #[test]
    fn hill_formulas() {
        assert_eq!(formula("CC(C)(N)CO"), "C4H11NO");
        assert_eq!(formula("OCCNCCO"), "C4H11NO2");
        assert_eq!(formula("C"), "CH4");
        assert_eq!(formula("[NH4+]"), "H4N");
        assert_eq!(formula("ClCCl"), "CH2Cl2");
    }

    #[test]
    fn hydrogen_count_is_additive() {
        let mol = parse_smiles("C[NH2+]CC(=O)[O-]").unwrap();
        let h: u32 = (0..mol.atom_count())
            .map(|i| mol.implicit_h(i) as u32 + mol.atom(i).explicit_h.unwrap_or(0) as u32)
            .sum();
        assert_eq!(mol.molecular_formula().count(Element::H), h);
    }

    #[test]
    fn parse_round_trip_and_weight() {
        let f: MolecularFormula = "C4H11NO".parse().unwrap();
        assert_eq!(f, parse_smiles("CC(C)(N)CO").unwrap().molecular_formula());
        assert!("C4h".parse::<MolecularFormula>().is_err());
        assert!("Xx2".parse::<MolecularFormula>().is_err());
        let mea = parse_smiles("NCCO").unwrap().molecular_weight();
        assert!((mea - 61.084).abs() < 1e-3, "{mea}");
    }
}
