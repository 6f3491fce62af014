//! Restricted substructure patterns and a backtracking matcher.
//!
//! The grammar is a SMARTS subset; see `docs/pattern_grammar.md`. Inside
//! brackets, juxtaposed primitives and `&` bind tightest, then `,` (or),
//! then `;` (and).

use std::fmt;

use thiserror::Error;

use crate::molgraph::{BondOrder, Element, MolecularGraph};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatternErrorKind {
    Empty,
    UnknownPrimitive(String),
    UnsupportedPrimitive(String),
    UnexpectedCharacter(char),
    UnbalancedParenthesis,
    EmptyBranch,
    UnterminatedBracket,
    UnmatchedRingClosure(u32),
    DanglingBond,
    Disconnected,
    DuplicateBond,
    DuplicateMap(u32),
    BadNumber,
}

impl fmt::Display for PatternErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use PatternErrorKind::*;
        match self {
            Empty => write!(f, "empty pattern"),
            UnknownPrimitive(p) => write!(f, "unknown primitive {p}"),
            UnsupportedPrimitive(p) => write!(f, "unsupported primitive {p}"),
            UnexpectedCharacter(c) => write!(f, "unexpected character {c:?}"),
            UnbalancedParenthesis => write!(f, "unbalanced parenthesis"),
            EmptyBranch => write!(f, "empty branch"),
            UnterminatedBracket => write!(f, "unterminated bracket atom"),
            UnmatchedRingClosure(d) => write!(f, "unmatched ring closure {d}"),
            DanglingBond => write!(f, "bond symbol without a following atom"),
            Disconnected => write!(f, "pattern must be connected"),
            DuplicateBond => write!(f, "atoms bonded twice"),
            DuplicateMap(m) => write!(f, "map number {m} used twice"),
            BadNumber => write!(f, "malformed number"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at offset {offset}")]
pub struct PatternError {
    pub kind: PatternErrorKind,
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimKind {
    /// Element with a fixed aromaticity (`C` aliphatic, `c` aromatic).
    Element { element: Element, aromatic: bool },
    /// `#n`: element regardless of aromaticity.
    AtomicNumber(Element),
    Aromatic,
    Aliphatic,
    Any,
    /// `D<n>`: number of explicit (heavy-atom) connections.
    Degree(u8),
    /// `H<n>`: total attached hydrogens.
    HCount(u8),
    /// `R`: atom lies on a ring. `R0` parses to the negation.
    Ring,
    Charge(i8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Primitive {
    pub negated: bool,
    pub kind: PrimKind,
}

impl Primitive {
    pub fn new(kind: PrimKind) -> Self {
        Primitive { negated: false, kind }
    }

    pub fn not(kind: PrimKind) -> Self {
        Primitive { negated: true, kind }
    }

    pub fn matches(&self, graph: &MolecularGraph, atom: usize) -> bool {
        let a = &graph.atoms()[atom];
        let hit = match self.kind {
            PrimKind::Element { element, aromatic } => a.element == element && a.aromatic == aromatic,
            PrimKind::AtomicNumber(e) => a.element == e,
            PrimKind::Aromatic => a.aromatic,
            PrimKind::Aliphatic => !a.aromatic,
            PrimKind::Any => true,
            PrimKind::Degree(d) => graph.degree(atom) == d as usize,
            PrimKind::HCount(h) => graph.total_h(atom) == h,
            PrimKind::Ring => graph.in_ring(atom),
            PrimKind::Charge(c) => a.formal_charge == c,
        };
        hit != self.negated
    }
}

/// Atom predicate in conjunctive form: every clause must hold; a clause
/// holds when any of its alternatives holds; an alternative holds when all
/// of its primitives hold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryAtom {
    pub clauses: Vec<Vec<Vec<Primitive>>>,
    pub map: Option<u32>,
}

impl QueryAtom {
    pub fn from_primitive(p: Primitive) -> Self {
        QueryAtom { clauses: vec![vec![vec![p]]], map: None }
    }

    pub fn matches(&self, graph: &MolecularGraph, atom: usize) -> bool {
        self.clauses
            .iter()
            .all(|clause| clause.iter().any(|alt| alt.iter().all(|p| p.matches(graph, atom))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BondQuery {
    Single,
    Double,
    Triple,
    Aromatic,
    Any,
    /// Unwritten bond: single or aromatic.
    SingleOrAromatic,
}

impl BondQuery {
    pub fn matches(self, order: BondOrder) -> bool {
        match self {
            BondQuery::Single => order == BondOrder::Single,
            BondQuery::Double => order == BondOrder::Double,
            BondQuery::Triple => order == BondOrder::Triple,
            BondQuery::Aromatic => order == BondOrder::Aromatic,
            BondQuery::Any => true,
            BondQuery::SingleOrAromatic => matches!(order, BondOrder::Single | BondOrder::Aromatic),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryBond {
    pub a: usize,
    pub b: usize,
    pub order: BondQuery,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternQuery {
    atoms: Vec<QueryAtom>,
    bonds: Vec<QueryBond>,
    adjacency: Vec<Vec<(usize, usize)>>,
    /// Breadth-first visiting order; each entry after the first carries the
    /// already-placed neighbour it is reached from.
    order: Vec<(usize, Option<usize>)>,
}

impl PatternQuery {
    /// Builds a query; it must be connected, non-empty and free of repeated
    /// bonds and map numbers.
    pub fn new(atoms: Vec<QueryAtom>, bonds: Vec<QueryBond>) -> Result<Self, PatternErrorKind> {
        if atoms.is_empty() {
            return Err(PatternErrorKind::Empty);
        }
        let n = atoms.len();
        let mut adjacency = vec![Vec::new(); n];
        for (i, b) in bonds.iter().enumerate() {
            assert!(b.a < n && b.b < n, "query bond endpoint out of range");
            if b.a == b.b || adjacency[b.a].iter().any(|&(v, _)| v == b.b) {
                return Err(PatternErrorKind::DuplicateBond);
            }
            adjacency[b.a].push((b.b, i));
            adjacency[b.b].push((b.a, i));
        }
        let mut maps: Vec<u32> = atoms.iter().filter_map(|a| a.map).collect();
        maps.sort_unstable();
        if let Some(w) = maps.windows(2).find(|w| w[0] == w[1]) {
            return Err(PatternErrorKind::DuplicateMap(w[0]));
        }
        let mut order = vec![(0, None)];
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut head = 0;
        while head < order.len() {
            let u = order[head].0;
            head += 1;
            for &(v, _) in &adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    order.push((v, Some(u)));
                }
            }
        }
        if order.len() != n {
            return Err(PatternErrorKind::Disconnected);
        }
        Ok(PatternQuery { atoms, bonds, adjacency, order })
    }

    pub fn atoms(&self) -> &[QueryAtom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[QueryBond] {
        &self.bonds
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    /// Query atom index carrying map number `map`.
    pub fn atom_with_map(&self, map: u32) -> Option<usize> {
        self.atoms.iter().position(|a| a.map == Some(map))
    }

    pub fn maps(&self) -> impl Iterator<Item = u32> + '_ {
        self.atoms.iter().filter_map(|a| a.map)
    }
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err<T>(&self, kind: PatternErrorKind, offset: usize) -> Result<T, PatternError> {
        Err(PatternError { kind, offset })
    }

    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn number(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.text[start..self.pos]).ok()?.parse().ok()
    }

    /// Name of an unrecognised primitive: one letter plus trailing lowercase.
    fn name_at(&self, at: usize) -> String {
        let mut end = at + 1;
        while end < self.text.len() && self.text[end].is_ascii_lowercase() {
            end += 1;
        }
        String::from_utf8_lossy(&self.text[at..end]).into_owned()
    }

    fn element_token(&mut self) -> Option<(Element, bool)> {
        let rest = &self.text[self.pos..];
        for two in ["Cl", "Br", "Si"] {
            if rest.starts_with(two.as_bytes()) {
                self.pos += 2;
                return Some((Element::from_symbol(two)?, false));
            }
        }
        let c = *rest.first()?;
        let s = (c as char).to_string();
        if let Some(e) = Element::from_aromatic_symbol(&s) {
            self.pos += 1;
            return Some((e, true));
        }
        match Element::from_symbol(&s) {
            Some(e) if e != Element::Si => {
                self.pos += 1;
                Some((e, false))
            }
            _ => None,
        }
    }

    fn primitive(&mut self) -> Result<Primitive, PatternError> {
        let start = self.pos;
        let mut negated = false;
        while self.peek() == Some(b'!') {
            negated = !negated;
            self.pos += 1;
        }
        let at = self.pos;
        let Some(c) = self.peek() else {
            return self.err(PatternErrorKind::UnterminatedBracket, start);
        };
        let count = |p: &mut Self, default: u32| -> Result<u32, PatternError> {
            if p.peek().is_some_and(|c| c.is_ascii_digit()) {
                p.number().ok_or(PatternError { kind: PatternErrorKind::BadNumber, offset: at })
            } else {
                Ok(default)
            }
        };
        let small = |v: u32| -> Result<u8, PatternError> {
            u8::try_from(v).map_err(|_| PatternError { kind: PatternErrorKind::BadNumber, offset: at })
        };
        let kind = match c {
            b'*' => {
                self.pos += 1;
                PrimKind::Any
            }
            b'a' => {
                self.pos += 1;
                PrimKind::Aromatic
            }
            b'A' => {
                self.pos += 1;
                PrimKind::Aliphatic
            }
            b'D' => {
                self.pos += 1;
                PrimKind::Degree(small(count(self, 1)?)?)
            }
            b'H' if !self.text.get(at + 1).is_some_and(|c| c.is_ascii_lowercase()) => {
                self.pos += 1;
                PrimKind::HCount(small(count(self, 1)?)?)
            }
            b'R' if !self.text.get(at + 1).is_some_and(|c| c.is_ascii_lowercase()) => {
                self.pos += 1;
                match count(self, u32::MAX)? {
                    u32::MAX => PrimKind::Ring,
                    0 => {
                        negated = !negated;
                        PrimKind::Ring
                    }
                    n => return self.err(PatternErrorKind::UnsupportedPrimitive(format!("R{n}")), at),
                }
            }
            b'+' | b'-' => {
                let sign: i32 = if c == b'+' { 1 } else { -1 };
                let mut n = 0;
                while self.peek() == Some(c) {
                    n += 1;
                    self.pos += 1;
                }
                if n == 1 && self.peek().is_some_and(|d| d.is_ascii_digit()) {
                    n = self.number().ok_or(PatternError { kind: PatternErrorKind::BadNumber, offset: at })? as i32;
                }
                PrimKind::Charge(i8::try_from(sign * n).map_err(|_| PatternError { kind: PatternErrorKind::BadNumber, offset: at })?)
            }
            b'#' => {
                self.pos += 1;
                let z = self.number().ok_or(PatternError { kind: PatternErrorKind::BadNumber, offset: at })?;
                match Element::ALL.iter().find(|e| e.atomic_number() as u32 == z) {
                    Some(&e) => PrimKind::AtomicNumber(e),
                    None => return self.err(PatternErrorKind::UnknownPrimitive(format!("#{z}")), at),
                }
            }
            b'$' | b'X' | b'x' | b'v' | b'r' | b'@' => {
                return self.err(PatternErrorKind::UnsupportedPrimitive(self.name_at(at)), at);
            }
            c if c.is_ascii_alphabetic() => match self.element_token() {
                Some((element, aromatic)) => PrimKind::Element { element, aromatic },
                None => return self.err(PatternErrorKind::UnknownPrimitive(self.name_at(at)), at),
            },
            c => return self.err(PatternErrorKind::UnexpectedCharacter(c as char), at),
        };
        Ok(Primitive { negated, kind })
    }

    /// Parses after `[` up to and including `]`.
    fn bracket(&mut self) -> Result<QueryAtom, PatternError> {
        let open = self.pos - 1;
        let mut clauses = vec![vec![vec![]]];
        let mut map = None;
        loop {
            let Some(c) = self.peek() else {
                return self.err(PatternErrorKind::UnterminatedBracket, open);
            };
            match c {
                b']' => {
                    self.pos += 1;
                    break;
                }
                b';' | b',' | b'&' => {
                    let cur = clauses.last().and_then(|c| c.last()).expect("non-empty");
                    if cur.is_empty() {
                        return self.err(PatternErrorKind::UnexpectedCharacter(c as char), self.pos);
                    }
                    self.pos += 1;
                    match c {
                        b';' => clauses.push(vec![vec![]]),
                        b',' => clauses.last_mut().expect("non-empty").push(vec![]),
                        _ => {}
                    }
                }
                b':' => {
                    self.pos += 1;
                    let at = self.pos;
                    map = Some(self.number().ok_or(PatternError { kind: PatternErrorKind::BadNumber, offset: at })?);
                    if self.peek() != Some(b']') {
                        return self.err(PatternErrorKind::UnterminatedBracket, open);
                    }
                }
                _ => {
                    let p = self.primitive()?;
                    clauses.last_mut().and_then(|c| c.last_mut()).expect("non-empty").push(p);
                }
            }
        }
        if clauses.iter().flatten().any(|alt| alt.is_empty()) {
            return self.err(PatternErrorKind::Empty, open);
        }
        Ok(QueryAtom { clauses, map })
    }

    fn bare_atom(&mut self) -> Result<QueryAtom, PatternError> {
        let at = self.pos;
        let c = self.peek().expect("caller checked");
        let kind = match c {
            b'*' => {
                self.pos += 1;
                PrimKind::Any
            }
            b'a' => {
                self.pos += 1;
                PrimKind::Aromatic
            }
            b'A' => {
                self.pos += 1;
                PrimKind::Aliphatic
            }
            _ => match self.element_token() {
                Some((element, aromatic)) if element != Element::Si => PrimKind::Element { element, aromatic },
                _ => return self.err(PatternErrorKind::UnknownPrimitive(self.name_at(at)), at),
            },
        };
        Ok(QueryAtom::from_primitive(Primitive::new(kind)))
    }
}

pub fn parse_pattern(text: &str) -> Result<PatternQuery, PatternError> {
    let mut p = Parser { text: text.as_bytes(), pos: 0 };
    if text.is_empty() {
        return p.err(PatternErrorKind::Empty, 0);
    }
    let mut atoms: Vec<QueryAtom> = Vec::new();
    let mut bonds: Vec<QueryBond> = Vec::new();
    let mut offsets: Vec<usize> = Vec::new();
    // (atom, offset of '(') per open branch
    let mut branches: Vec<(usize, usize)> = Vec::new();
    let mut prev: Option<usize> = None;
    let mut pending: Option<(BondQuery, usize)> = None;
    let mut rings: std::collections::BTreeMap<u32, (usize, Option<BondQuery>, usize)> = Default::default();
    let mut just_opened = false;

    let add_bond = |bonds: &mut Vec<QueryBond>, a: usize, b: usize, order: BondQuery, at: usize| {
        if a == b || bonds.iter().any(|x| (x.a == a && x.b == b) || (x.a == b && x.b == a)) {
            return Err(PatternError { kind: PatternErrorKind::DuplicateBond, offset: at });
        }
        bonds.push(QueryBond { a, b, order });
        Ok(())
    };

    while let Some(c) = p.peek() {
        let at = p.pos;
        match c {
            b'(' => {
                let Some(u) = prev else {
                    return p.err(PatternErrorKind::UnexpectedCharacter('('), at);
                };
                if pending.is_some() {
                    return p.err(PatternErrorKind::DanglingBond, at);
                }
                branches.push((u, at));
                p.pos += 1;
                just_opened = true;
                continue;
            }
            b')' => {
                if just_opened {
                    return p.err(PatternErrorKind::EmptyBranch, at);
                }
                if pending.is_some() {
                    return p.err(PatternErrorKind::DanglingBond, at);
                }
                let Some((u, _)) = branches.pop() else {
                    return p.err(PatternErrorKind::UnbalancedParenthesis, at);
                };
                prev = Some(u);
                p.pos += 1;
            }
            b'-' | b'=' | b'#' | b':' | b'~' => {
                if prev.is_none() || pending.is_some() {
                    return p.err(PatternErrorKind::UnexpectedCharacter(c as char), at);
                }
                let order = match c {
                    b'-' => BondQuery::Single,
                    b'=' => BondQuery::Double,
                    b'#' => BondQuery::Triple,
                    b':' => BondQuery::Aromatic,
                    _ => BondQuery::Any,
                };
                pending = Some((order, at));
                p.pos += 1;
            }
            b'0'..=b'9' | b'%' => {
                let Some(u) = prev else {
                    return p.err(PatternErrorKind::UnexpectedCharacter(c as char), at);
                };
                let digit = if c == b'%' {
                    p.pos += 1;
                    let s = p.text.get(p.pos..p.pos + 2).filter(|d| d.iter().all(u8::is_ascii_digit));
                    let Some(s) = s else { return p.err(PatternErrorKind::BadNumber, at) };
                    p.pos += 2;
                    (s[0] - b'0') as u32 * 10 + (s[1] - b'0') as u32
                } else {
                    p.pos += 1;
                    (c - b'0') as u32
                };
                let order = pending.take().map(|(o, _)| o);
                if let Some((v, open_order, _)) = rings.remove(&digit) {
                    let order = order.or(open_order).unwrap_or(BondQuery::SingleOrAromatic);
                    add_bond(&mut bonds, v, u, order, at)?;
                } else {
                    rings.insert(digit, (u, order, at));
                }
            }
            b'.' => return p.err(PatternErrorKind::Disconnected, at),
            b'[' | b'*' | b'a' | b'A' | b'B'..=b'Z' | b'b'..=b'z' => {
                let atom = if c == b'[' {
                    p.pos += 1;
                    p.bracket()?
                } else {
                    p.bare_atom()?
                };
                let idx = atoms.len();
                atoms.push(atom);
                offsets.push(at);
                if let Some(u) = prev {
                    let order = pending.take().map_or(BondQuery::SingleOrAromatic, |(o, _)| o);
                    add_bond(&mut bonds, u, idx, order, at)?;
                }
                prev = Some(idx);
            }
            c => return p.err(PatternErrorKind::UnexpectedCharacter(c as char), at),
        }
        just_opened = false;
    }
    if let Some((_, at)) = pending {
        return p.err(PatternErrorKind::DanglingBond, at);
    }
    if let Some(&(_, at)) = branches.last() {
        return p.err(PatternErrorKind::UnbalancedParenthesis, at);
    }
    if let Some((&d, &(_, _, at))) = rings.iter().next() {
        return p.err(PatternErrorKind::UnmatchedRingClosure(d), at);
    }
    PatternQuery::new(atoms, bonds).map_err(|kind| {
        let offset = match &kind {
            PatternErrorKind::DuplicateMap(m) => atoms_offset_with_map(&offsets, text, *m),
            _ => 0,
        };
        PatternError { kind, offset }
    })
}

fn atoms_offset_with_map(offsets: &[usize], text: &str, map: u32) -> usize {
    let needle = format!(":{map}]");
    let mut hits = text.match_indices(&needle).map(|(i, _)| i);
    let second = hits.nth(1).unwrap_or(0);
    offsets.iter().copied().filter(|&o| o <= second).max().unwrap_or(0)
}

/// All injective mappings (query atom index → graph atom index) that
/// satisfy every atom and bond predicate, sorted lexicographically.
pub fn match_pattern(query: &PatternQuery, graph: &MolecularGraph) -> Vec<Vec<usize>> {
    let n = graph.atom_count();
    let q = query.atoms.len();
    let allowed: Vec<Vec<bool>> = query
        .atoms
        .iter()
        .map(|qa| (0..n).map(|i| qa.matches(graph, i)).collect())
        .collect();
    if allowed.iter().any(|row| !row.contains(&true)) {
        return Vec::new();
    }
    let mut mapping = vec![usize::MAX; q];
    let mut used = vec![false; n];
    let mut out = Vec::new();
    extend(query, graph, &allowed, 0, &mut mapping, &mut used, &mut out);
    out.sort_unstable();
    out
}

fn consistent(query: &PatternQuery, graph: &MolecularGraph, qa: usize, ga: usize, mapping: &[usize]) -> bool {
    query.adjacency[qa].iter().all(|&(qb, bi)| {
        let gb = mapping[qb];
        gb == usize::MAX || graph.bond_between(ga, gb).is_some_and(|b| query.bonds[bi].order.matches(b.order))
    })
}

fn extend(
    query: &PatternQuery,
    graph: &MolecularGraph,
    allowed: &[Vec<bool>],
    depth: usize,
    mapping: &mut Vec<usize>,
    used: &mut Vec<bool>,
    out: &mut Vec<Vec<usize>>,
) {
    if depth == query.order.len() {
        out.push(mapping.clone());
        return;
    }
    let (qa, parent) = query.order[depth];
    let candidates: Vec<usize> = match parent {
        None => (0..graph.atom_count()).collect(),
        Some(p) => graph.neighbors(mapping[p]).iter().map(|&(v, _)| v).collect(),
    };
    for ga in candidates {
        if used[ga] || !allowed[qa][ga] || !consistent(query, graph, qa, ga, mapping) {
            continue;
        }
        mapping[qa] = ga;
        used[ga] = true;
        extend(query, graph, allowed, depth + 1, mapping, used, out);
        used[ga] = false;
        mapping[qa] = usize::MAX;
    }
}
