//! Canonical atom ranking and SMILES writing.
//!
//! Ranks start from per-atom invariants (element, charge, degree, hydrogen
//! count, aromaticity) and are refined by neighbour classes until stable.
//! Remaining ties are broken by individualising each member of the first
//! tied class in turn and keeping the lexicographically smallest SMILES, so
//! the output does not depend on input atom order.

use super::{implicit_hydrogens, BondOrder, MolecularGraph};

/// Upper bound on complete labelings explored while breaking ties. Highly
/// symmetric molecules hit this only when the remaining ties are
/// automorphic, where every branch yields the same string anyway.
const LEAF_BUDGET: usize = 256;

fn dense_ranks<K: Ord>(keys: &[K]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut ranks = vec![0; keys.len()];
    let mut rank = 0;
    for w in 0..order.len() {
        if w > 0 && keys[order[w]] != keys[order[w - 1]] {
            rank += 1;
        }
        ranks[order[w]] = rank;
    }
    ranks
}

fn initial_ranks(graph: &MolecularGraph) -> Vec<usize> {
    let keys: Vec<_> = (0..graph.atom_count())
        .map(|i| {
            let a = &graph.atoms()[i];
            (
                a.element.atomic_number(),
                a.formal_charge,
                graph.degree(i),
                graph.total_h(i),
                a.aromatic,
            )
        })
        .collect();
    dense_ranks(&keys)
}

fn class_count(ranks: &[usize]) -> usize {
    ranks.iter().max().map_or(0, |m| m + 1)
}

fn refine(graph: &MolecularGraph, mut ranks: Vec<usize>) -> Vec<usize> {
    loop {
        let keys: Vec<(usize, Vec<(u8, usize)>)> = (0..graph.atom_count())
            .map(|i| {
                let mut nbrs: Vec<(u8, usize)> = graph
                    .neighbors(i)
                    .iter()
                    .map(|&(v, b)| (graph.bonds()[b].order.code(), ranks[v]))
                    .collect();
                nbrs.sort_unstable();
                (ranks[i], nbrs)
            })
            .collect();
        let next = dense_ranks(&keys);
        if class_count(&next) == class_count(&ranks) {
            return next;
        }
        ranks = next;
    }
}

fn first_tied_class(ranks: &[usize]) -> Option<Vec<usize>> {
    let mut counts = vec![0usize; class_count(ranks)];
    for &r in ranks {
        counts[r] += 1;
    }
    let class = counts.iter().position(|&c| c > 1)?;
    Some((0..ranks.len()).filter(|&i| ranks[i] == class).collect())
}

struct Search<'a> {
    graph: &'a MolecularGraph,
    leaves: usize,
    best: Option<(String, Vec<usize>)>,
}

impl Search<'_> {
    fn explore(&mut self, ranks: Vec<usize>) {
        let ranks = refine(self.graph, ranks);
        let Some(tied) = first_tied_class(&ranks) else {
            let smiles = write_smiles_ordered(self.graph, &ranks);
            self.leaves += 1;
            if self.best.as_ref().is_none_or(|(s, _)| smiles < *s) {
                self.best = Some((smiles, ranks));
            }
            return;
        };
        for (k, &chosen) in tied.iter().enumerate() {
            if k > 0 && self.leaves >= LEAF_BUDGET {
                break;
            }
            let split: Vec<usize> = ranks
                .iter()
                .enumerate()
                .map(|(i, &r)| 2 * r + usize::from(r == ranks[chosen] && i != chosen))
                .collect();
            self.explore(dense_ranks(&split));
        }
    }
}

fn canonicalize(graph: &MolecularGraph) -> (String, Vec<usize>) {
    if graph.atom_count() == 0 {
        return (String::new(), Vec::new());
    }
    let mut search = Search { graph, leaves: 0, best: None };
    search.explore(initial_ranks(graph));
    search.best.expect("at least one leaf is always explored")
}

/// A total order of atoms (distinct ranks `0..n`) that is identical for
/// isomorphic graphs up to relabelling.
pub fn canonical_ranks(graph: &MolecularGraph) -> Vec<usize> {
    canonicalize(graph).1
}

/// Canonical SMILES: isomorphic graphs give identical strings.
pub fn write_canonical_smiles(graph: &MolecularGraph) -> String {
    canonicalize(graph).0
}

fn bond_symbol(graph: &MolecularGraph, a: usize, b: usize, order: BondOrder) -> &'static str {
    let both_aromatic = graph.atoms()[a].aromatic && graph.atoms()[b].aromatic;
    match order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic if both_aromatic => "",
        BondOrder::Aromatic => ":",
    }
}

fn atom_token(graph: &MolecularGraph, i: usize) -> String {
    let atom = &graph.atoms()[i];
    let h = graph.total_h(i);
    let symbol = if atom.aromatic {
        atom.element.symbol().to_ascii_lowercase()
    } else {
        atom.element.symbol().to_string()
    };
    let organic = atom.element.is_organic_subset()
        && atom.formal_charge == 0
        && implicit_hydrogens(atom.element, 0, atom.aromatic, graph.bond_valence_sum(i)) == Some(h);
    if organic {
        return symbol;
    }
    let mut out = format!("[{symbol}");
    match h {
        0 => {}
        1 => out.push('H'),
        n => out.push_str(&format!("H{n}")),
    }
    match atom.formal_charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        c if c > 0 => out.push_str(&format!("+{c}")),
        c => out.push_str(&format!("-{}", -c)),
    }
    out.push(']');
    out
}

fn ring_label(n: usize) -> String {
    if n < 10 {
        n.to_string()
    } else {
        format!("%{n:02}")
    }
}

/// Writes SMILES visiting atoms in the order given by `ranks` (lower
/// first). Any ranking produces a valid string for the same graph;
/// canonical output uses [`canonical_ranks`].
pub fn write_smiles_ordered(graph: &MolecularGraph, ranks: &[usize]) -> String {
    let n = graph.atom_count();
    assert_eq!(ranks.len(), n, "one rank per atom");
    let sorted_nbrs: Vec<Vec<(usize, usize)>> = (0..n)
        .map(|i| {
            let mut v = graph.neighbors(i).to_vec();
            v.sort_by_key(|&(nbr, _)| ranks[nbr]);
            v
        })
        .collect();

    // Spanning forest by DFS in rank order; every other bond closes a ring.
    let mut visited = vec![false; n];
    let mut tree_bond = vec![false; graph.bond_count()];
    let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut roots: Vec<usize> = Vec::new();
    let mut by_rank: Vec<usize> = (0..n).collect();
    by_rank.sort_by_key(|&i| ranks[i]);
    for &root in &by_rank {
        if visited[root] {
            continue;
        }
        roots.push(root);
        visited[root] = true;
        let mut stack = vec![(root, 0usize)];
        while let Some(top) = stack.last_mut() {
            let (u, pos) = (top.0, top.1);
            if pos == sorted_nbrs[u].len() {
                stack.pop();
                continue;
            }
            top.1 += 1;
            let (v, b) = sorted_nbrs[u][pos];
            if !visited[v] {
                visited[v] = true;
                tree_bond[b] = true;
                children[u].push((v, b));
                stack.push((v, 0));
            }
        }
    }

    // Emit in the same DFS order.
    let mut emitted = vec![false; n];
    let mut open_digit: Vec<Option<usize>> = vec![None; graph.bond_count()];
    let mut free_digits: Vec<bool> = vec![true; 100];
    let mut fragments = Vec::with_capacity(roots.len());
    for &root in &roots {
        let mut out = String::new();
        enum Ev {
            Atom(usize, Option<(usize, usize)>),
            Open,
            Close,
        }
        let mut events = vec![Ev::Atom(root, None)];
        while let Some(ev) = events.pop() {
            match ev {
                Ev::Close => out.push(')'),
                Ev::Atom(u, incoming) => {
                    if let Some((parent, b)) = incoming {
                        out.push_str(bond_symbol(graph, parent, u, graph.bonds()[b].order));
                    }
                    out.push_str(&atom_token(graph, u));
                    emitted[u] = true;
                    for &(v, b) in &sorted_nbrs[u] {
                        if tree_bond[b] {
                            continue;
                        }
                        if let Some(d) = open_digit[b] {
                            out.push_str(&ring_label(d));
                            free_digits[d] = true;
                            open_digit[b] = None;
                        } else if !emitted[v] {
                            let d = (1..100).find(|&d| free_digits[d]).expect("fewer than 99 open rings");
                            free_digits[d] = false;
                            open_digit[b] = Some(d);
                            out.push_str(bond_symbol(graph, u, v, graph.bonds()[b].order));
                            out.push_str(&ring_label(d));
                        }
                    }
                    let kids = &children[u];
                    // push in reverse so the first child is emitted first;
                    // all but the last child go in parentheses
                    for (k, &(v, b)) in kids.iter().enumerate().rev() {
                        if k + 1 == kids.len() {
                            events.push(Ev::Atom(v, Some((u, b))));
                        } else {
                            events.push(Ev::Close);
                            events.push(Ev::Atom(v, Some((u, b))));
                            events.push(Ev::Open);
                        }
                    }
                }
                Ev::Open => out.push('('),
            }
        }
        fragments.push(out);
    }
    if roots.len() > 1 {
        // fragment order must not depend on how ranks split fragments
        fragments.sort();
    }
    fragments.join(".")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;

    fn canon(s: &str) -> String {
        write_canonical_smiles(&parse_smiles(s).unwrap())
    }

    #[test]
    fn order_independent() {
        assert_eq!(canon("OCC"), canon("CCO"));
        assert_eq!(canon("c1ccccc1O"), canon("Oc1ccccc1"));
        assert_eq!(canon("C1CC1C(=O)N"), canon("NC(=O)C1CC1"));
        assert_ne!(canon("CCO"), canon("COC"));
    }

    #[test]
    fn round_trips() {
        for s in [
            "CCO",
            "c1ccc2ccccc2c1",
            "C%10CC%10",
            "[NH4+].[Cl-]",
            "c1cc[nH]c1",
            "O=c1cccc[nH]1",
            "c1ccccc1-c1ccccc1",
            "C1CCC2CCCCC2C1",
            "OB(O)c1ccccc1",
            "[Si](C)(C)(C)C",
            "F[B-](F)(F)F",
        ] {
            let g = parse_smiles(s).unwrap();
            let out = write_canonical_smiles(&g);
            let back = parse_smiles(&out).unwrap_or_else(|e| panic!("{s} -> {out}: {e}"));
            assert_eq!(write_canonical_smiles(&back), out, "{s}");
            assert_eq!(back.atom_count(), g.atom_count());
            assert_eq!(back.bond_count(), g.bond_count());
        }
    }

    #[test]
    fn ranks_are_a_permutation() {
        let g = parse_smiles("CC(C)(C)c1ccc(C(C)(C)C)cc1").unwrap();
        let mut r = canonical_ranks(&g);
        r.sort_unstable();
        assert_eq!(r, (0..g.atom_count()).collect::<Vec<_>>());
    }

    #[test]
    fn ring_labels() {
        assert_eq!(ring_label(3), "3");
        assert_eq!(ring_label(10), "%10");
        assert_eq!(ring_label(42), "%42");
    }
}
