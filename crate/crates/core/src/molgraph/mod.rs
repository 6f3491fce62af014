//! Molecular graph model, SMILES reading and canonical writing, hybridization
//! perception and the sp² network-size measure.
//!
//! A [`MolecularGraph`] is always valid once constructed: bonds reference
//! existing atoms, there are no self-loops or parallel bonds, and every atom's
//! valence fits its element. Hybridization is perceived on construction, so
//! any graph handed out by this module is ready for [`sp2_network_size`].

mod canon;
mod element;
mod hybrid;
mod smiles;

pub use canon::{canonical_ranks, write_canonical_smiles, write_smiles_ordered};
pub use element::Element;
pub use hybrid::{perceive_hybridization, sp2_network_size};
pub use smiles::{parse_smiles, SmilesError, SmilesErrorKind};

use std::collections::HashSet;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to an atom's valence sum. Aromatic bonds count 1 here;
    /// the extra pi electron is handled in [`implicit_hydrogens`].
    pub fn valence(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Hybridization {
    Sp,
    Sp2,
    Sp3,
    #[default]
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub element: Element,
    pub aromatic: bool,
    pub formal_charge: i8,
    /// Hydrogens written explicitly (bracket atoms).
    pub explicit_h: u8,
    /// When set the hydrogen count is fixed to `explicit_h`; otherwise
    /// implicit hydrogens are derived from default valences.
    pub bracket: bool,
    pub hybridization: Hybridization,
}

impl Atom {
    /// An organic-subset atom whose hydrogens are implicit.
    pub fn new(element: Element) -> Self {
        Atom {
            element,
            aromatic: false,
            formal_charge: 0,
            explicit_h: 0,
            bracket: false,
            hybridization: Hybridization::Other,
        }
    }

    pub fn aromatic(element: Element) -> Self {
        Atom {
            aromatic: true,
            ..Atom::new(element)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn new(a: usize, b: usize, order: BondOrder) -> Self {
        Bond { a, b, order }
    }

    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("bond {bond} references missing atom {atom}")]
    BadEndpoint { bond: usize, atom: usize },
    #[error("bond {bond} connects atom {atom} to itself")]
    SelfLoop { bond: usize, atom: usize },
    #[error("atoms {a} and {b} are bonded more than once")]
    ParallelBond { a: usize, b: usize },
    #[error("atom {atom} ({element}) exceeds its allowed valence")]
    Valence { atom: usize, element: Element },
    #[error("atom {atom}: element {element} cannot be aromatic")]
    AromaticElement { atom: usize, element: Element },
}

/// Implicit hydrogen count for an organic-subset atom, or `None` when the
/// bonds already exceed every allowed valence.
///
/// The lowest allowed valence that accommodates the bond sum is used. An
/// aromatic atom donates one electron to its ring, which removes one
/// hydrogen when there is one to remove.
pub fn implicit_hydrogens(element: Element, charge: i8, aromatic: bool, bond_sum: u8) -> Option<u8> {
    let valence = element
        .allowed_valences(charge)
        .into_iter()
        .find(|&v| v >= bond_sum)?;
    let free = valence - bond_sum;
    Some(if aromatic { free.saturating_sub(1) } else { free })
}

#[derive(Debug, Clone)]
pub struct MolecularGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, usize)>>,
    implicit_h: Vec<u8>,
    in_ring: Vec<bool>,
}

impl MolecularGraph {
    /// Validates atoms and bonds, derives implicit hydrogens and ring
    /// membership, and perceives hybridization.
    pub fn new(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Result<Self, GraphError> {
        let n = atoms.len();
        let mut adjacency = vec![Vec::new(); n];
        let mut seen = HashSet::with_capacity(bonds.len());
        for (i, bond) in bonds.iter().enumerate() {
            for atom in [bond.a, bond.b] {
                if atom >= n {
                    return Err(GraphError::BadEndpoint { bond: i, atom });
                }
            }
            if bond.a == bond.b {
                return Err(GraphError::SelfLoop { bond: i, atom: bond.a });
            }
            let key = (bond.a.min(bond.b), bond.a.max(bond.b));
            if !seen.insert(key) {
                return Err(GraphError::ParallelBond { a: key.0, b: key.1 });
            }
            adjacency[bond.a].push((bond.b, i));
            adjacency[bond.b].push((bond.a, i));
        }

        let mut implicit_h = vec![0u8; n];
        for (i, atom) in atoms.iter().enumerate() {
            if atom.aromatic && !atom.element.can_be_aromatic() {
                return Err(GraphError::AromaticElement { atom: i, element: atom.element });
            }
            let bond_sum: u8 = adjacency[i].iter().map(|&(_, b)| bonds[b].order.valence()).sum();
            let valence_err = GraphError::Valence { atom: i, element: atom.element };
            let max = atom
                .element
                .allowed_valences(atom.formal_charge)
                .last()
                .copied()
                .ok_or_else(|| valence_err.clone())?;
            if atom.bracket {
                if bond_sum + atom.explicit_h > max {
                    return Err(valence_err);
                }
            } else {
                let h = implicit_hydrogens(atom.element, atom.formal_charge, atom.aromatic, bond_sum)
                    .ok_or_else(|| valence_err.clone())?;
                if bond_sum + atom.explicit_h + h > max {
                    return Err(valence_err);
                }
                implicit_h[i] = h;
            }
        }

        let mut graph = MolecularGraph {
            in_ring: vec![false; n],
            atoms,
            bonds,
            adjacency,
            implicit_h,
        };
        graph.in_ring = graph.compute_ring_atoms();
        hybrid::assign_hybridization(&mut graph.atoms, &graph.bonds, &graph.adjacency);
        Ok(graph)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    /// `(neighbor, bond index)` pairs of an atom.
    pub fn neighbors(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.adjacency[a]
            .iter()
            .find(|&&(nbr, _)| nbr == b)
            .map(|&(_, bond)| &self.bonds[bond])
    }

    pub fn implicit_h(&self, atom: usize) -> u8 {
        self.implicit_h[atom]
    }

    pub fn total_h(&self, atom: usize) -> u8 {
        self.atoms[atom].explicit_h + self.implicit_h[atom]
    }

    /// Sum of bond valences around an atom (aromatic bonds count 1).
    pub fn bond_valence_sum(&self, atom: usize) -> u8 {
        self.adjacency[atom]
            .iter()
            .map(|&(_, b)| self.bonds[b].order.valence())
            .sum()
    }

    pub fn in_ring(&self, atom: usize) -> bool {
        self.in_ring[atom]
    }

    /// Connected components as sorted atom-index lists, ordered by their
    /// smallest atom index.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.atoms.len();
        let mut comp = vec![usize::MAX; n];
        let mut out = Vec::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![start];
            comp[start] = id;
            let mut stack = vec![start];
            while let Some(u) = stack.pop() {
                for &(v, _) in &self.adjacency[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = id;
                        members.push(v);
                        stack.push(v);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// Returns the graph relabelled so that old atom `i` becomes
    /// `perm[i]`. Bonds keep their relative order.
    pub fn permuted(&self, perm: &[usize]) -> MolecularGraph {
        assert_eq!(perm.len(), self.atoms.len(), "permutation length mismatch");
        let mut atoms = vec![Atom::new(Element::C); self.atoms.len()];
        for (old, atom) in self.atoms.iter().enumerate() {
            atoms[perm[old]] = atom.clone();
        }
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond::new(perm[b.a], perm[b.b], b.order))
            .collect();
        MolecularGraph::new(atoms, bonds).expect("permutation preserves validity")
    }

    /// Disjoint union; atoms of `other` are appended after ours.
    pub fn disjoint_union(&self, other: &MolecularGraph) -> MolecularGraph {
        let offset = self.atoms.len();
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        let mut bonds = self.bonds.clone();
        bonds.extend(
            other
                .bonds
                .iter()
                .map(|b| Bond::new(b.a + offset, b.b + offset, b.order)),
        );
        MolecularGraph::new(atoms, bonds).expect("union of valid graphs is valid")
    }

    /// Decomposes into owned atom and bond lists for editing.
    pub fn into_parts(self) -> (Vec<Atom>, Vec<Bond>) {
        (self.atoms, self.bonds)
    }

    /// Atoms on at least one cycle: endpoints of non-bridge bonds.
    fn compute_ring_atoms(&self) -> Vec<bool> {
        let n = self.atoms.len();
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut ring_bond = vec![true; self.bonds.len()];
        let mut timer = 0;
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            // (atom, bond used to reach it, next adjacency position)
            let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            while let Some(top) = stack.last_mut() {
                let (u, parent_bond) = (top.0, top.1);
                if top.2 < self.adjacency[u].len() {
                    let (v, b) = self.adjacency[u][top.2];
                    top.2 += 1;
                    if b == parent_bond {
                        continue;
                    }
                    if disc[v] == usize::MAX {
                        disc[v] = timer;
                        low[v] = timer;
                        timer += 1;
                        stack.push((v, b, 0));
                    } else {
                        low[u] = low[u].min(disc[v]);
                    }
                } else {
                    stack.pop();
                    if let Some(&(p, _, _)) = stack.last() {
                        low[p] = low[p].min(low[u]);
                        if low[u] > disc[p] {
                            ring_bond[parent_bond] = false;
                        }
                    }
                }
            }
        }
        let mut in_ring = vec![false; n];
        for (bond, &ring) in self.bonds.iter().zip(&ring_bond) {
            if ring {
                in_ring[bond.a] = true;
                in_ring[bond.b] = true;
            }
        }
        in_ring
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize) -> MolecularGraph {
        let atoms = vec![Atom::new(Element::C); n];
        let bonds = (1..n).map(|i| Bond::new(i - 1, i, BondOrder::Single)).collect();
        MolecularGraph::new(atoms, bonds).unwrap()
    }

    #[test]
    fn implicit_h_for_alkane() {
        let g = chain(3);
        assert_eq!(g.total_h(0), 3);
        assert_eq!(g.total_h(1), 2);
    }

    #[test]
    fn rejects_self_loop_and_parallel() {
        let atoms = vec![Atom::new(Element::C); 2];
        let err = MolecularGraph::new(atoms.clone(), vec![Bond::new(0, 0, BondOrder::Single)]).unwrap_err();
        assert!(matches!(err, GraphError::SelfLoop { .. }));
        let err = MolecularGraph::new(
            atoms,
            vec![Bond::new(0, 1, BondOrder::Single), Bond::new(1, 0, BondOrder::Double)],
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::ParallelBond { a: 0, b: 1 }));
    }

    #[test]
    fn rejects_pentavalent_carbon() {
        let mut atoms = vec![Atom::new(Element::C)];
        let mut bonds = Vec::new();
        for i in 1..=5 {
            atoms.push(Atom::new(Element::F));
            bonds.push(Bond::new(0, i, BondOrder::Single));
        }
        let err = MolecularGraph::new(atoms, bonds).unwrap_err();
        assert_eq!(err, GraphError::Valence { atom: 0, element: Element::C });
    }

    #[test]
    fn ring_membership() {
        // cyclopropane with a methyl tail
        let atoms = vec![Atom::new(Element::C); 4];
        let bonds = vec![
            Bond::new(0, 1, BondOrder::Single),
            Bond::new(1, 2, BondOrder::Single),
            Bond::new(2, 0, BondOrder::Single),
            Bond::new(2, 3, BondOrder::Single),
        ];
        let g = MolecularGraph::new(atoms, bonds).unwrap();
        assert!(g.in_ring(0) && g.in_ring(1) && g.in_ring(2));
        assert!(!g.in_ring(3));
        assert!(!chain(4).in_ring(1));
    }

    #[test]
    fn components_split_fragments() {
        let g = chain(2).disjoint_union(&chain(3));
        assert_eq!(g.components(), vec![vec![0, 1], vec![2, 3, 4]]);
    }
}
