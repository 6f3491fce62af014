use super::{Atom, Bond, BondOrder, Hybridization, MolecularGraph};

/// Rule-based hybridization:
///
/// * aromatic atom: SP2
/// * any triple bond, or two or more double bonds: SP
/// * exactly one double bond: SP2
/// * otherwise SP3, except halogens which are OTHER
pub(super) fn assign_hybridization(atoms: &mut [Atom], bonds: &[Bond], adjacency: &[Vec<(usize, usize)>]) {
    for (i, atom) in atoms.iter_mut().enumerate() {
        let mut doubles = 0;
        let mut triples = 0;
        for &(_, b) in &adjacency[i] {
            match bonds[b].order {
                BondOrder::Double => doubles += 1,
                BondOrder::Triple => triples += 1,
                _ => {}
            }
        }
        atom.hybridization = if atom.aromatic {
            Hybridization::Sp2
        } else if triples > 0 || doubles >= 2 {
            Hybridization::Sp
        } else if doubles == 1 {
            Hybridization::Sp2
        } else if atom.element.is_halogen() {
            Hybridization::Other
        } else {
            Hybridization::Sp3
        };
    }
}

/// Returns a copy of the graph with hybridization (re)assigned. Graphs are
/// perceived on construction, so this is idempotent.
pub fn perceive_hybridization(graph: &MolecularGraph) -> MolecularGraph {
    let mut out = graph.clone();
    assign_hybridization(&mut out.atoms, &out.bonds, &out.adjacency);
    out
}

/// Size of the largest connected set of SP2 atoms, walking only SP2–SP2
/// bonds. Zero when the molecule has no SP2 atom.
pub fn sp2_network_size(graph: &MolecularGraph) -> usize {
    let is_sp2 = |i: usize| graph.atoms()[i].hybridization == Hybridization::Sp2;
    let n = graph.atom_count();
    let mut visited = vec![false; n];
    let mut best = 0;
    let mut stack = Vec::new();
    for start in (0..n).filter(|&i| is_sp2(i)) {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        stack.push(start);
        let mut count = 0;
        while let Some(u) = stack.pop() {
            count += 1;
            for &(v, _) in graph.neighbors(u) {
                if is_sp2(v) && !visited[v] {
                    visited[v] = true;
                    stack.push(v);
                }
            }
        }
        best = best.max(count);
    }
    best
}
