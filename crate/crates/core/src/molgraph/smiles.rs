//! SMILES subset reader.
//!
//! Accepted: organic-subset and bracket atoms (isotope, H count, charge and
//! atom class are read; isotope and class are dropped), lowercase aromatic
//! atoms, the bond symbols `- = # :`, branches, ring closures `0-9` and
//! `%nn`, and `.` fragment separators. Stereo markers `/ \ @ @@` are
//! accepted and discarded.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use super::{Atom, Bond, BondOrder, Element, GraphError, MolecularGraph};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SmilesErrorKind {
    Empty,
    UnbalancedParenthesis,
    EmptyBranch,
    UnmatchedRingClosure(u32),
    ConflictingRingBond(u32),
    UnknownElement(String),
    UnexpectedCharacter(char),
    DanglingBond,
    UnterminatedBracket,
    SelfLoop,
    DuplicateBond,
    Valence(Element),
    AromaticElement(Element),
}

impl fmt::Display for SmilesErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SmilesErrorKind::Empty => write!(f, "empty SMILES"),
            SmilesErrorKind::UnbalancedParenthesis => write!(f, "unbalanced parenthesis"),
            SmilesErrorKind::EmptyBranch => write!(f, "empty branch"),
            SmilesErrorKind::UnmatchedRingClosure(n) => write!(f, "unmatched ring closure {n}"),
            SmilesErrorKind::ConflictingRingBond(n) => write!(f, "conflicting bond orders on ring closure {n}"),
            SmilesErrorKind::UnknownElement(s) => write!(f, "unknown element '{s}'"),
            SmilesErrorKind::UnexpectedCharacter(c) => write!(f, "unexpected character '{c}'"),
            SmilesErrorKind::DanglingBond => write!(f, "bond symbol not followed by an atom"),
            SmilesErrorKind::UnterminatedBracket => write!(f, "unterminated bracket atom"),
            SmilesErrorKind::SelfLoop => write!(f, "ring closure bonds an atom to itself"),
            SmilesErrorKind::DuplicateBond => write!(f, "atoms bonded twice"),
            SmilesErrorKind::Valence(e) => write!(f, "valence violation on {e}"),
            SmilesErrorKind::AromaticElement(e) => write!(f, "{e} cannot be aromatic"),
        }
    }
}

/// Parse failure with the 0-based character offset it refers to.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at offset {offset}")]
pub struct SmilesError {
    pub kind: SmilesErrorKind,
    pub offset: usize,
}

impl SmilesError {
    fn new(kind: SmilesErrorKind, offset: usize) -> Self {
        SmilesError { kind, offset }
    }
}

struct RingOpen {
    atom: usize,
    order: Option<BondOrder>,
    offset: usize,
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    atoms: Vec<Atom>,
    atom_offsets: Vec<usize>,
    bonds: Vec<Bond>,
    bond_offsets: Vec<usize>,
    rings: BTreeMap<u32, RingOpen>,
}

/// Parses a SMILES string into a validated [`MolecularGraph`].
pub fn parse_smiles(text: &str) -> Result<MolecularGraph, SmilesError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(SmilesError::new(SmilesErrorKind::Empty, 0));
    }
    let mut parser = Parser {
        chars: text.chars().collect(),
        pos: 0,
        atoms: Vec::new(),
        atom_offsets: Vec::new(),
        bonds: Vec::new(),
        bond_offsets: Vec::new(),
        rings: BTreeMap::new(),
    };
    parser.run()?;
    let Parser { atoms, atom_offsets, bonds, bond_offsets, .. } = parser;
    MolecularGraph::new(atoms, bonds).map_err(|e| match e {
        GraphError::Valence { atom, element } => {
            SmilesError::new(SmilesErrorKind::Valence(element), atom_offsets[atom])
        }
        GraphError::AromaticElement { atom, element } => {
            SmilesError::new(SmilesErrorKind::AromaticElement(element), atom_offsets[atom])
        }
        GraphError::SelfLoop { bond, .. } => SmilesError::new(SmilesErrorKind::SelfLoop, bond_offsets[bond]),
        GraphError::ParallelBond { a, b } => {
            let offset = bonds_offset_for(a, b, &atom_offsets);
            SmilesError::new(SmilesErrorKind::DuplicateBond, offset)
        }
        GraphError::BadEndpoint { bond, .. } => {
            SmilesError::new(SmilesErrorKind::DuplicateBond, bond_offsets[bond])
        }
    })
}

fn bonds_offset_for(a: usize, b: usize, atom_offsets: &[usize]) -> usize {
    atom_offsets[a].max(atom_offsets[b])
}

impl Parser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn run(&mut self) -> Result<(), SmilesError> {
        let mut prev: Option<usize> = None;
        let mut branches: Vec<(usize, usize)> = Vec::new(); // (atom, offset of '(')
        let mut pending: Option<(BondOrder, usize)> = None;
        // set right after '(' so an immediately following ')' is caught
        let mut branch_open_at: Option<usize> = None;

        while let Some(c) = self.peek() {
            let offset = self.pos;
            match c {
                '(' => {
                    let atom = prev.ok_or(SmilesError::new(SmilesErrorKind::UnexpectedCharacter('('), offset))?;
                    if pending.is_some() {
                        return Err(SmilesError::new(SmilesErrorKind::DanglingBond, offset));
                    }
                    branches.push((atom, offset));
                    branch_open_at = Some(offset);
                    self.pos += 1;
                    continue;
                }
                ')' => {
                    if branch_open_at.is_some() {
                        return Err(SmilesError::new(SmilesErrorKind::EmptyBranch, offset));
                    }
                    if pending.is_some() {
                        return Err(SmilesError::new(SmilesErrorKind::DanglingBond, offset));
                    }
                    let (atom, _) = branches
                        .pop()
                        .ok_or(SmilesError::new(SmilesErrorKind::UnbalancedParenthesis, offset))?;
                    prev = Some(atom);
                    self.pos += 1;
                    continue;
                }
                '-' | '=' | '#' | ':' => {
                    if pending.is_some() || prev.is_none() {
                        return Err(SmilesError::new(SmilesErrorKind::UnexpectedCharacter(c), offset));
                    }
                    let order = match c {
                        '-' => BondOrder::Single,
                        '=' => BondOrder::Double,
                        '#' => BondOrder::Triple,
                        _ => BondOrder::Aromatic,
                    };
                    pending = Some((order, offset));
                    self.pos += 1;
                    continue;
                }
                '/' | '\\' => {
                    self.pos += 1;
                    continue;
                }
                '.' => {
                    if pending.is_some() {
                        return Err(SmilesError::new(SmilesErrorKind::DanglingBond, offset));
                    }
                    if prev.is_none() {
                        return Err(SmilesError::new(SmilesErrorKind::UnexpectedCharacter('.'), offset));
                    }
                    prev = None;
                    self.pos += 1;
                    continue;
                }
                '0'..='9' | '%' => {
                    let atom = prev.ok_or(SmilesError::new(SmilesErrorKind::UnexpectedCharacter(c), offset))?;
                    let number = self.ring_number()?;
                    let order = pending.take().map(|(o, _)| o);
                    self.ring_closure(atom, number, order, offset)?;
                    continue;
                }
                _ => {}
            }

            let atom = if c == '[' {
                self.bracket_atom()?
            } else {
                self.organic_atom()?
            };
            branch_open_at = None;
            let idx = self.atoms.len();
            self.atoms.push(atom);
            self.atom_offsets.push(offset);
            if let Some(p) = prev {
                let order = match pending.take() {
                    Some((o, _)) => o,
                    None => self.implicit_order(p, idx),
                };
                self.bonds.push(Bond::new(p, idx, order));
                self.bond_offsets.push(offset);
            } else if let Some((_, off)) = pending {
                return Err(SmilesError::new(SmilesErrorKind::DanglingBond, off));
            }
            prev = Some(idx);
        }

        if let Some((_, off)) = pending {
            return Err(SmilesError::new(SmilesErrorKind::DanglingBond, off));
        }
        if let Some(&(_, off)) = branches.first() {
            return Err(SmilesError::new(SmilesErrorKind::UnbalancedParenthesis, off));
        }
        if let Some((&number, open)) = self.rings.iter().min_by_key(|(_, r)| r.offset) {
            return Err(SmilesError::new(SmilesErrorKind::UnmatchedRingClosure(number), open.offset));
        }
        Ok(())
    }

    fn implicit_order(&self, a: usize, b: usize) -> BondOrder {
        if self.atoms[a].aromatic && self.atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn ring_number(&mut self) -> Result<u32, SmilesError> {
        let offset = self.pos;
        if self.peek() == Some('%') {
            self.pos += 1;
            let digits: String = self.chars[self.pos..].iter().take(2).collect();
            if digits.len() != 2 || !digits.chars().all(|d| d.is_ascii_digit()) {
                return Err(SmilesError::new(SmilesErrorKind::UnexpectedCharacter('%'), offset));
            }
            self.pos += 2;
            Ok(digits.parse().expect("two ascii digits"))
        } else {
            let d = self.peek().and_then(|c| c.to_digit(10)).expect("caller checked digit");
            self.pos += 1;
            Ok(d)
        }
    }

    fn ring_closure(&mut self, atom: usize, number: u32, order: Option<BondOrder>, offset: usize) -> Result<(), SmilesError> {
        match self.rings.remove(&number) {
            None => {
                self.rings.insert(number, RingOpen { atom, order, offset });
            }
            Some(open) => {
                let order = match (open.order, order) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(SmilesError::new(SmilesErrorKind::ConflictingRingBond(number), offset))
                    }
                    (Some(a), _) | (None, Some(a)) => a,
                    (None, None) => self.implicit_order(open.atom, atom),
                };
                if open.atom == atom {
                    return Err(SmilesError::new(SmilesErrorKind::SelfLoop, offset));
                }
                self.bonds.push(Bond::new(open.atom, atom, order));
                self.bond_offsets.push(offset);
            }
        }
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<Atom, SmilesError> {
        let offset = self.pos;
        let c = self.peek().expect("caller checked");
        if c.is_ascii_lowercase() {
            let element = Element::from_aromatic_symbol(&c.to_string())
                .ok_or_else(|| SmilesError::new(SmilesErrorKind::UnknownElement(c.to_string()), offset))?;
            self.pos += 1;
            return Ok(Atom::aromatic(element));
        }
        if !c.is_ascii_uppercase() {
            return Err(SmilesError::new(SmilesErrorKind::UnexpectedCharacter(c), offset));
        }
        let two: String = self.chars[self.pos..].iter().take(2).collect();
        if let Some(e) = Element::from_symbol(&two).filter(|e| e.is_organic_subset()) {
            if two.len() == 2 {
                self.pos += 2;
                return Ok(Atom::new(e));
            }
        }
        let one = c.to_string();
        match Element::from_symbol(&one).filter(|e| e.is_organic_subset()) {
            Some(e) => {
                self.pos += 1;
                Ok(Atom::new(e))
            }
            None => Err(SmilesError::new(SmilesErrorKind::UnknownElement(one), offset)),
        }
    }

    fn read_number(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        self.chars[start..self.pos].iter().collect::<String>().parse().ok()
    }

    fn bracket_atom(&mut self) -> Result<Atom, SmilesError> {
        let open = self.pos;
        self.pos += 1; // '['
        let unterminated = SmilesError::new(SmilesErrorKind::UnterminatedBracket, open);

        let _isotope = self.read_number();

        let sym_offset = self.pos;
        let first = self.peek().ok_or_else(|| unterminated.clone())?;
        let (element, aromatic) = if first.is_ascii_lowercase() {
            self.pos += 1;
            let e = Element::from_aromatic_symbol(&first.to_string())
                .ok_or_else(|| SmilesError::new(SmilesErrorKind::UnknownElement(first.to_string()), sym_offset))?;
            (e, true)
        } else if first.is_ascii_uppercase() {
            let mut symbol = first.to_string();
            self.pos += 1;
            if let Some(next) = self.peek().filter(|c| c.is_ascii_lowercase()) {
                let two = format!("{first}{next}");
                if Element::from_symbol(&two).is_some() {
                    symbol = two;
                    self.pos += 1;
                } else if Element::from_symbol(&symbol).is_none() {
                    // e.g. [Zn], [Se]: report the full two-letter symbol
                    return Err(SmilesError::new(SmilesErrorKind::UnknownElement(two), sym_offset));
                }
            }
            let e = Element::from_symbol(&symbol)
                .ok_or_else(|| SmilesError::new(SmilesErrorKind::UnknownElement(symbol.clone()), sym_offset))?;
            (e, false)
        } else {
            return Err(SmilesError::new(SmilesErrorKind::UnexpectedCharacter(first), sym_offset));
        };

        while self.peek() == Some('@') {
            self.pos += 1;
        }
        // extended chirality classes like @TH1, @SP2
        if self.peek().is_some_and(|c| c == 'T' || c == 'S' || c == 'A' || c == 'O')
            && self.chars.get(self.pos.saturating_sub(1)) == Some(&'@')
        {
            self.pos += 2;
            self.read_number();
        }

        let mut explicit_h = 0u8;
        if self.peek() == Some('H') {
            self.pos += 1;
            explicit_h = self.read_number().unwrap_or(1).min(u8::MAX as u32) as u8;
        }

        let mut charge: i32 = 0;
        while let Some(sign @ ('+' | '-')) = self.peek() {
            let s = if sign == '+' { 1 } else { -1 };
            self.pos += 1;
            match self.read_number() {
                Some(n) => {
                    charge += s * n as i32;
                    break;
                }
                None => charge += s,
            }
        }

        if self.peek() == Some(':') {
            self.pos += 1;
            self.read_number();
        }

        match self.peek() {
            Some(']') => self.pos += 1,
            Some(c) => return Err(SmilesError::new(SmilesErrorKind::UnexpectedCharacter(c), self.pos)),
            None => return Err(unterminated),
        }

        Ok(Atom {
            element,
            aromatic,
            formal_charge: charge.clamp(i8::MIN as i32, i8::MAX as i32) as i8,
            explicit_h,
            bracket: true,
            hybridization: Default::default(),
        })
    }
}
