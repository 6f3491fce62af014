use std::fmt;

/// Elements the graph model understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Element {
    B,
    C,
    N,
    O,
    F,
    Si,
    P,
    S,
    Cl,
    Br,
    I,
}

impl Element {
    pub const ALL: [Element; 11] = [
        Element::B,
        Element::C,
        Element::N,
        Element::O,
        Element::F,
        Element::Si,
        Element::P,
        Element::S,
        Element::Cl,
        Element::Br,
        Element::I,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
            Element::Si => "Si",
            Element::P => "P",
            Element::S => "S",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
        }
    }

    /// Parses a capitalised element symbol ("C", "Cl", "Si").
    pub fn from_symbol(symbol: &str) -> Option<Element> {
        Element::ALL.iter().copied().find(|e| e.symbol() == symbol)
    }

    /// Parses a lowercase aromatic symbol ("c", "n", ...).
    pub fn from_aromatic_symbol(symbol: &str) -> Option<Element> {
        match symbol {
            "b" => Some(Element::B),
            "c" => Some(Element::C),
            "n" => Some(Element::N),
            "o" => Some(Element::O),
            "p" => Some(Element::P),
            "s" => Some(Element::S),
            _ => None,
        }
    }

    pub fn atomic_number(self) -> u8 {
        match self {
            Element::B => 5,
            Element::C => 6,
            Element::N => 7,
            Element::O => 8,
            Element::F => 9,
            Element::Si => 14,
            Element::P => 15,
            Element::S => 16,
            Element::Cl => 17,
            Element::Br => 35,
            Element::I => 53,
        }
    }

    /// Member of the SMILES organic subset (may be written without brackets).
    pub fn is_organic_subset(self) -> bool {
        !matches!(self, Element::Si)
    }

    pub fn can_be_aromatic(self) -> bool {
        matches!(
            self,
            Element::B | Element::C | Element::N | Element::O | Element::P | Element::S
        )
    }

    pub fn is_halogen(self) -> bool {
        matches!(self, Element::F | Element::Cl | Element::Br | Element::I)
    }

    fn valence_electrons(self) -> i32 {
        match self {
            Element::B => 3,
            Element::C | Element::Si => 4,
            Element::N | Element::P => 5,
            Element::O | Element::S => 6,
            Element::F | Element::Cl | Element::Br | Element::I => 7,
        }
    }

    /// Allowed total valences in ascending order for a given formal charge.
    ///
    /// Charged atoms take the valences of their isoelectronic neutral
    /// counterpart (N+ behaves like C, O- like F, B- like C). Only P and S
    /// get expanded octets.
    pub fn allowed_valences(self, charge: i8) -> Vec<u8> {
        let g = self.valence_electrons() - charge as i32;
        if !(0..=8).contains(&g) {
            return Vec::new();
        }
        let base = if g <= 4 { g } else { 8 - g };
        let expanded = matches!(self, Element::P | Element::S) && g > 4;
        if !expanded {
            return vec![base as u8];
        }
        (base..=g).step_by(2).map(|v| v as u8).collect()
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}
