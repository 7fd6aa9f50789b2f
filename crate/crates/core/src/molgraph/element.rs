use std::fmt;

/// Elements accepted by the parser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Element {
    H,
    B,
    C,
    N,
    O,
    F,
    P,
    S,
    Cl,
    Br,
    I,
}

// Every symbol of the periodic table, used to tell an unsupported element from
// a plain syntax error.
const ALL_SYMBOLS: &[&str] = &[
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh",
    "Fl", "Mc", "Lv", "Ts", "Og",
];

pub(crate) fn is_known_symbol(s: &str) -> bool {
    ALL_SYMBOLS.contains(&s)
}

impl Element {
    pub const ALL: [Element; 11] = [
        Element::H,
        Element::B,
        Element::C,
        Element::N,
        Element::O,
        Element::F,
        Element::P,
        Element::S,
        Element::Cl,
        Element::Br,
        Element::I,
    ];

    pub fn from_symbol(s: &str) -> Option<Element> {
        Some(match s {
            "H" => Element::H,
            "B" => Element::B,
            "C" => Element::C,
            "N" => Element::N,
            "O" => Element::O,
            "F" => Element::F,
            "P" => Element::P,
            "S" => Element::S,
            "Cl" => Element::Cl,
            "Br" => Element::Br,
            "I" => Element::I,
            _ => return None,
        })
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Element::H => "H",
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
            Element::P => "P",
            Element::S => "S",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
        }
    }

    pub fn atomic_number(self) -> u8 {
        match self {
            Element::H => 1,
            Element::B => 5,
            Element::C => 6,
            Element::N => 7,
            Element::O => 8,
            Element::F => 9,
            Element::P => 15,
            Element::S => 16,
            Element::Cl => 17,
            Element::Br => 35,
            Element::I => 53,
        }
    }

    /// Standard atomic weight, g/mol.
    pub fn mass(self) -> f64 {
        match self {
            Element::H => 1.0080,
            Element::B => 10.8120,
            Element::C => 12.0110,
            Element::N => 14.0070,
            Element::O => 15.9990,
            Element::F => 18.9980,
            Element::P => 30.9740,
            Element::S => 32.0670,
            Element::Cl => 35.4530,
            Element::Br => 79.9040,
            Element::I => 126.9040,
        }
    }

    /// Members of the SMILES organic subset may be written without brackets.
    pub fn is_organic_subset(self) -> bool {
        !matches!(self, Element::H)
    }

    pub fn can_be_aromatic(self) -> bool {
        matches!(
            self,
            Element::B | Element::C | Element::N | Element::O | Element::P | Element::S
        )
    }

    fn neutral_valences(self) -> &'static [u8] {
        match self {
            Element::H => &[1],
            Element::B => &[3],
            Element::C => &[4],
            Element::N => &[3],
            Element::O => &[2],
            Element::P => &[3, 5],
            Element::S => &[2, 4, 6],
            Element::F | Element::Cl | Element::Br | Element::I => &[1],
        }
    }

    /// Allowed total valences (bond orders plus hydrogens) at a formal charge,
    /// ascending. Empty when the charge state is not representable.
    pub fn valences(self, charge: i8) -> Vec<u8> {
        let q = charge as i32;
        let shift = |v: u8| -> i32 {
            match self {
                Element::H => v as i32 - q.abs(),
                Element::C => v as i32 - q.abs(),
                Element::B => v as i32 - q,
                _ => v as i32 + q,
            }
        };
        let mut out: Vec<u8> = self
            .neutral_valences()
            .iter()
            .map(|&v| shift(v))
            .filter(|&v| (0..=8).contains(&v))
            .map(|v| v as u8)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Smallest allowed valence that is at least `used`, for an uncharged atom.
    pub fn default_valence_for(self, used: u8) -> Option<u8> {
        self.valences(0).into_iter().find(|&v| v >= used)
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charge_shifts_valence() {
        assert_eq!(Element::N.valences(0), vec![3]);
        assert_eq!(Element::N.valences(1), vec![4]);
        assert_eq!(Element::N.valences(-1), vec![2]);
        assert_eq!(Element::O.valences(1), vec![3]);
        assert_eq!(Element::O.valences(-1), vec![1]);
        assert_eq!(Element::C.valences(1), vec![3]);
        assert_eq!(Element::S.valences(0), vec![2, 4, 6]);
        assert_eq!(Element::Cl.valences(-1), vec![0]);
        assert_eq!(Element::B.valences(-1), vec![4]);
    }

    #[test]
    fn default_valence_picks_lowest_fit() {
        assert_eq!(Element::S.default_valence_for(3), Some(4));
        assert_eq!(Element::N.default_valence_for(4), None);
        assert_eq!(Element::P.default_valence_for(0), Some(3));
    }
}
