use std::collections::BTreeMap;

use super::element::{is_known_symbol, Element};
use super::{aromatic, Atom, BondOrder, Molecule, ParseError};

/// Syntax-level result of reading a SMILES string: atoms and bonds exactly as
/// written, before kekulization and valence checks.
#[derive(Debug, Clone)]
pub struct SmilesGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<(usize, usize, BondOrder)>,
}

pub fn parse_smiles(text: &str) -> Result<Molecule, ParseError> {
    let graph = parse_graph(text)?;
    Molecule::from_parts(graph.atoms, graph.bonds)
}

/// Parses and validates, additionally rejecting radicals. This is the
/// validity gate for generated strings.
pub fn parse_valid(text: &str) -> Option<Molecule> {
    let graph = parse_graph(text).ok()?;
    if !is_radical_free(&graph) {
        return None;
    }
    Molecule::from_parts(graph.atoms, graph.bonds).ok()
}

/// False when a bracket atom carries too few hydrogens to reach any standard
/// valence for its element and charge.
pub fn is_radical_free(graph: &SmilesGraph) -> bool {
    let mut orders: Vec<BondOrder> = graph.bonds.iter().map(|b| b.2).collect();
    if orders.contains(&BondOrder::Aromatic) || graph.atoms.iter().any(|a| a.aromatic) {
        let pairs: Vec<(usize, usize)> = graph.bonds.iter().map(|&(a, b, _)| (a, b)).collect();
        if aromatic::kekulize_input(&graph.atoms, &pairs, &mut orders).is_err() {
            // Not decidable here; the valence check rejects it.
            return true;
        }
    }
    let mut used = vec![0u8; graph.atoms.len()];
    for (&(a, b, _), order) in graph.bonds.iter().zip(&orders) {
        used[a] += order.valence();
        used[b] += order.valence();
    }
    graph.atoms.iter().enumerate().all(|(i, atom)| match atom.explicit_h {
        None => true,
        Some(h) => match atom.element.valences(atom.formal_charge).first() {
            Some(&lowest) => used[i] + h >= lowest,
            None => true,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct PendingBond {
    order: Option<BondOrder>,
    pos: usize,
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    bonds: Vec<(usize, usize, BondOrder)>,
}

pub fn parse_graph(text: &str) -> Result<SmilesGraph, ParseError> {
    let text = text.trim();
    let mut p = Parser {
        text: text.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
    };
    p.run()?;
    Ok(SmilesGraph {
        atoms: p.atoms,
        bonds: p.bonds,
    })
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn err(&self, msg: &str) -> ParseError {
        ParseError::syntax(self.pos, msg)
    }

    fn run(&mut self) -> Result<(), ParseError> {
        if self.text.is_empty() {
            return Err(self.err("empty SMILES"));
        }
        let mut prev: Option<usize> = None;
        let mut branches: Vec<usize> = Vec::new();
        let mut pending: Option<PendingBond> = None;
        let mut open_rings: BTreeMap<u32, (usize, Option<BondOrder>)> = BTreeMap::new();
        let mut after_open_paren = false;

        while let Some(c) = self.peek() {
            match c {
                b'(' => {
                    if prev.is_none() || after_open_paren || pending.is_some() {
                        return Err(self.err("branch without a preceding atom"));
                    }
                    branches.push(prev.unwrap());
                    after_open_paren = true;
                    self.pos += 1;
                }
                b')' => {
                    if after_open_paren {
                        return Err(self.err("empty branch"));
                    }
                    if pending.is_some() {
                        return Err(self.err("bond before ')'"));
                    }
                    match branches.pop() {
                        Some(a) => prev = Some(a),
                        None => return Err(self.err("unmatched ')'")),
                    }
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if prev.is_none() || pending.is_some() {
                        return Err(self.err("misplaced bond symbol"));
                    }
                    let order = match c {
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        b':' => BondOrder::Aromatic,
                        // stereo markers are read as plain single bonds
                        _ => BondOrder::Single,
                    };
                    pending = Some(PendingBond {
                        order: Some(order),
                        pos: self.pos,
                    });
                    self.pos += 1;
                }
                b'$' => return Err(self.err("quadruple bonds are not supported")),
                b'.' => return Err(ParseError::Disconnected),
                b'0'..=b'9' | b'%' => {
                    let at = self.pos;
                    let digit = self.ring_number()?;
                    let atom = match prev {
                        Some(a) if !after_open_paren => a,
                        _ => return Err(ParseError::syntax(at, "ring closure without an atom")),
                    };
                    let order = pending.take().and_then(|p| p.order);
                    match open_rings.remove(&digit) {
                        Some((other, other_order)) => {
                            let order = match (order, other_order) {
                                (Some(a), Some(b)) if a != b => {
                                    return Err(ParseError::RingClosure(format!(
                                        "conflicting bond symbols on ring {digit}"
                                    )))
                                }
                                (Some(a), _) | (None, Some(a)) => a,
                                (None, None) => self.default_order(other, atom),
                            };
                            if other == atom {
                                return Err(ParseError::RingClosure(format!(
                                    "ring {digit} closes on its own atom"
                                )));
                            }
                            if self
                                .bonds
                                .iter()
                                .any(|&(a, b, _)| (a == other && b == atom) || (a == atom && b == other))
                            {
                                return Err(ParseError::RingClosure(format!(
                                    "ring {digit} duplicates an existing bond"
                                )));
                            }
                            self.bonds.push((other, atom, order));
                        }
                        None => {
                            open_rings.insert(digit, (atom, order));
                        }
                    }
                }
                b'[' | b'A'..=b'Z' | b'a'..=b'z' | b'*' => {
                    let idx = self.atom()?;
                    if let Some(p) = prev {
                        let order = match pending.take().and_then(|b| b.order) {
                            Some(o) => o,
                            None => self.default_order(p, idx),
                        };
                        self.bonds.push((p, idx, order));
                    } else if let Some(b) = pending {
                        return Err(ParseError::syntax(b.pos, "bond without a preceding atom"));
                    }
                    prev = Some(idx);
                    after_open_paren = false;
                }
                _ => return Err(self.err("unexpected character")),
            }
        }
        if let Some(b) = pending {
            return Err(ParseError::syntax(b.pos, "dangling bond symbol"));
        }
        if after_open_paren || !branches.is_empty() {
            return Err(self.err("unmatched '('"));
        }
        if let Some((digit, _)) = open_rings.iter().next() {
            return Err(ParseError::RingClosure(format!("ring {digit} never closed")));
        }
        if self.atoms.is_empty() {
            return Err(self.err("no atoms"));
        }
        Ok(())
    }

    fn default_order(&self, a: usize, b: usize) -> BondOrder {
        if self.atoms[a].aromatic && self.atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn ring_number(&mut self) -> Result<u32, ParseError> {
        let c = self.peek().unwrap();
        if c == b'%' {
            let digits = self.text.get(self.pos + 1..self.pos + 3);
            match digits {
                Some(d) if d.iter().all(u8::is_ascii_digit) => {
                    self.pos += 3;
                    Ok(((d[0] - b'0') * 10 + (d[1] - b'0')) as u32)
                }
                _ => Err(self.err("'%' must be followed by two digits")),
            }
        } else {
            self.pos += 1;
            Ok((c - b'0') as u32)
        }
    }

    fn push_atom(&mut self, atom: Atom) -> usize {
        self.atoms.push(atom);
        self.atoms.len() - 1
    }

    fn atom(&mut self) -> Result<usize, ParseError> {
        let c = self.peek().unwrap();
        if c == b'[' {
            return self.bracket_atom();
        }
        if c == b'*' {
            return Err(ParseError::UnsupportedElement("*".into()));
        }
        let start = self.pos;
        let two = self.text.get(start..start + 2);
        if two == Some(b"Cl") || two == Some(b"Br") {
            self.pos += 2;
            let el = if two == Some(b"Cl") {
                Element::Cl
            } else {
                Element::Br
            };
            return Ok(self.push_atom(Atom::new(el)));
        }
        self.pos += 1;
        let (el, aromatic) = match c {
            b'B' => (Element::B, false),
            b'C' => (Element::C, false),
            b'N' => (Element::N, false),
            b'O' => (Element::O, false),
            b'P' => (Element::P, false),
            b'S' => (Element::S, false),
            b'F' => (Element::F, false),
            b'I' => (Element::I, false),
            b'b' => (Element::B, true),
            b'c' => (Element::C, true),
            b'n' => (Element::N, true),
            b'o' => (Element::O, true),
            b'p' => (Element::P, true),
            b's' => (Element::S, true),
            _ => {
                return Err(ParseError::syntax(
                    start,
                    format!("'{}' is not an organic-subset atom", c as char),
                ))
            }
        };
        let mut atom = Atom::new(el);
        atom.aromatic = aromatic;
        Ok(self.push_atom(atom))
    }

    fn bracket_atom(&mut self) -> Result<usize, ParseError> {
        let open = self.pos;
        self.pos += 1;
        // isotope, discarded
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        let (element, aromatic) = self.bracket_symbol()?;
        // chirality, discarded
        if self.peek() == Some(b'@') {
            self.pos += 1;
            if self.peek() == Some(b'@') {
                self.pos += 1;
            } else {
                while matches!(self.peek(), Some(b'A'..=b'Z')) {
                    self.pos += 1;
                }
                while matches!(self.peek(), Some(b'0'..=b'9')) {
                    self.pos += 1;
                }
            }
        }
        let mut hydrogens = 0u8;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            hydrogens = 1;
            if let Some(d @ b'0'..=b'9') = self.peek() {
                hydrogens = d - b'0';
                self.pos += 1;
            }
        }
        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            if let Some(d @ b'0'..=b'9') = self.peek() {
                let mut mag = (d - b'0') as i32;
                self.pos += 1;
                if let Some(d2 @ b'0'..=b'9') = self.peek() {
                    mag = mag * 10 + (d2 - b'0') as i32;
                    self.pos += 1;
                }
                charge = unit * mag;
            } else {
                charge = unit;
                while self.peek() == Some(sign) {
                    charge += unit;
                    self.pos += 1;
                }
            }
        }
        if charge.abs() > 8 {
            return Err(self.err("charge out of range"));
        }
        if self.peek() == Some(b':') {
            self.pos += 1;
            let digits_start = self.pos;
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.pos += 1;
            }
            if self.pos == digits_start {
                return Err(self.err("atom class needs digits"));
            }
        }
        if self.peek() != Some(b']') {
            return Err(ParseError::syntax(open, "unterminated bracket atom"));
        }
        self.pos += 1;
        let mut atom = Atom::bracket(element, hydrogens, charge as i8);
        atom.aromatic = aromatic;
        Ok(self.push_atom(atom))
    }

    fn bracket_symbol(&mut self) -> Result<(Element, bool), ParseError> {
        let start = self.pos;
        let c = match self.peek() {
            Some(c) => c,
            None => return Err(self.err("unterminated bracket atom")),
        };
        if c == b'*' {
            return Err(ParseError::UnsupportedElement("*".into()));
        }
        if c.is_ascii_lowercase() {
            // aromatic symbols: b c n o p s, plus two-letter se/as
            let two = self.text.get(start..start + 2);
            if two == Some(b"se") || two == Some(b"as") {
                return Err(ParseError::UnsupportedElement(
                    String::from_utf8_lossy(two.unwrap()).into_owned(),
                ));
            }
            self.pos += 1;
            let sym = (c.to_ascii_uppercase() as char).to_string();
            return match Element::from_symbol(&sym) {
                Some(e) if e.can_be_aromatic() => Ok((e, true)),
                _ => Err(ParseError::syntax(start, "invalid aromatic symbol")),
            };
        }
        if !c.is_ascii_uppercase() {
            return Err(ParseError::syntax(start, "expected element symbol"));
        }
        if let Some(&l) = self.text.get(start + 1) {
            if l.is_ascii_lowercase() {
                let sym = String::from_utf8_lossy(&self.text[start..start + 2]).into_owned();
                if is_known_symbol(&sym) {
                    self.pos += 2;
                    return Element::from_symbol(&sym)
                        .map(|e| (e, false))
                        .ok_or(ParseError::UnsupportedElement(sym));
                }
            }
        }
        let sym = (c as char).to_string();
        self.pos += 1;
        if !is_known_symbol(&sym) {
            return Err(ParseError::syntax(start, "unknown element"));
        }
        Element::from_symbol(&sym)
            .map(|e| (e, false))
            .ok_or(ParseError::UnsupportedElement(sym))
    }
}
