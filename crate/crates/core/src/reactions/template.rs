use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::Deserialize;

use super::pattern::{match_pattern, parse_pattern, PatternQuery};
use super::ReactionError;
use crate::molgraph::{parse_smiles, write_canonical_smiles, Atom, Bond, BondOrder, MolecularGraph};

/// Upper bound on role-match combinations tried per application.
pub const MAX_COMBINATIONS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edit {
    AddBond(u32, u32, BondOrder),
    RemoveBond(u32, u32),
    DeleteAtom(u32),
    SetCharge(u32, i8),
    SetAromatic(u32, bool),
    /// Fixes the hydrogen count of an atom (it becomes a bracket atom).
    SetH(u32, u8),
}

impl Edit {
    pub fn maps(&self) -> Vec<u32> {
        match *self {
            Edit::AddBond(a, b, _) | Edit::RemoveBond(a, b) => vec![a, b],
            Edit::DeleteAtom(a) | Edit::SetCharge(a, _) | Edit::SetAromatic(a, _) | Edit::SetH(a, _) => vec![a],
        }
    }
}

fn order_name(o: BondOrder) -> &'static str {
    match o {
        BondOrder::Single => "single",
        BondOrder::Double => "double",
        BondOrder::Triple => "triple",
        BondOrder::Aromatic => "aromatic",
    }
}

impl fmt::Display for Edit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Edit::AddBond(a, b, o) => write!(f, "add-bond {a} {b} {}", order_name(o)),
            Edit::RemoveBond(a, b) => write!(f, "remove-bond {a} {b}"),
            Edit::DeleteAtom(a) => write!(f, "delete-atom {a}"),
            Edit::SetCharge(a, c) => write!(f, "set-charge {a} {c:+}"),
            Edit::SetAromatic(a, v) => write!(f, "set-aromatic {a} {v}"),
            Edit::SetH(a, h) => write!(f, "set-h {a} {h}"),
        }
    }
}

impl FromStr for Edit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let words: Vec<&str> = s.split_whitespace().collect();
        let map = |i: usize| -> Result<u32, String> {
            words
                .get(i)
                .ok_or_else(|| format!("`{s}`: missing operand"))?
                .parse()
                .map_err(|_| format!("`{s}`: bad map number"))
        };
        let arity = |n: usize| -> Result<(), String> {
            if words.len() == n + 1 {
                Ok(())
            } else {
                Err(format!("`{s}`: expected {n} operands"))
            }
        };
        let op = words.first().copied().unwrap_or("");
        match op {
            "add-bond" => {
                arity(3)?;
                let order = match words[3] {
                    "single" | "-" => BondOrder::Single,
                    "double" | "=" => BondOrder::Double,
                    "triple" | "#" => BondOrder::Triple,
                    "aromatic" | ":" => BondOrder::Aromatic,
                    other => return Err(format!("`{s}`: unknown bond order {other}")),
                };
                Ok(Edit::AddBond(map(1)?, map(2)?, order))
            }
            "remove-bond" => {
                arity(2)?;
                Ok(Edit::RemoveBond(map(1)?, map(2)?))
            }
            "delete-atom" => {
                arity(1)?;
                Ok(Edit::DeleteAtom(map(1)?))
            }
            "set-charge" => {
                arity(2)?;
                let c = words[2].parse::<i8>().map_err(|_| format!("`{s}`: bad charge"))?;
                Ok(Edit::SetCharge(map(1)?, c))
            }
            "set-aromatic" => {
                arity(2)?;
                let v = words[2].parse::<bool>().map_err(|_| format!("`{s}`: expected true or false"))?;
                Ok(Edit::SetAromatic(map(1)?, v))
            }
            "set-h" => {
                arity(2)?;
                let h = words[2].parse::<u8>().map_err(|_| format!("`{s}`: bad hydrogen count"))?;
                Ok(Edit::SetH(map(1)?, h))
            }
            _ => Err(format!("`{s}`: unknown edit operation `{op}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReactionTemplate {
    pub id: String,
    pub name: String,
    pub role_patterns: Vec<String>,
    pub roles: Vec<PatternQuery>,
    pub edits: Vec<Edit>,
    /// Map numbers of each role.
    role_maps: Vec<Vec<u32>>,
}

/// One entry of a reaction file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateSpec {
    pub id: String,
    #[serde(default)]
    pub name: String,
    pub arity: usize,
    pub roles: Vec<String>,
    pub edits: Vec<String>,
}

impl ReactionTemplate {
    pub fn from_spec(spec: &TemplateSpec) -> Result<Self, String> {
        if !(1..=3).contains(&spec.arity) {
            return Err(format!("arity {} outside 1..=3", spec.arity));
        }
        if spec.roles.len() != spec.arity {
            return Err(format!("arity {} but {} role patterns", spec.arity, spec.roles.len()));
        }
        let roles = spec
            .roles
            .iter()
            .enumerate()
            .map(|(i, p)| parse_pattern(p).map_err(|e| format!("role {i} pattern `{p}`: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        let role_maps: Vec<Vec<u32>> = roles.iter().map(|r| r.maps().collect()).collect();
        let mut all = BTreeSet::new();
        for m in role_maps.iter().flatten() {
            if !all.insert(*m) {
                return Err(format!("map number {m} appears in more than one role"));
            }
        }
        let edits = spec.edits.iter().map(|e| e.parse::<Edit>()).collect::<Result<Vec<_>, _>>()?;
        for e in &edits {
            for m in e.maps() {
                if !all.contains(&m) {
                    return Err(format!("edit `{e}` references unmapped atom {m}"));
                }
            }
        }
        Ok(ReactionTemplate {
            id: spec.id.clone(),
            name: spec.name.clone(),
            role_patterns: spec.roles.clone(),
            roles,
            edits,
            role_maps,
        })
    }

    pub fn parse(id: &str, roles: &[&str], edits: &[&str]) -> Result<Self, String> {
        ReactionTemplate::from_spec(&TemplateSpec {
            id: id.into(),
            name: String::new(),
            arity: roles.len(),
            roles: roles.iter().map(|s| s.to_string()).collect(),
            edits: edits.iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn arity(&self) -> usize {
        self.roles.len()
    }

    /// Whether `graph` can fill `role`.
    pub fn role_matches(&self, role: usize, graph: &MolecularGraph) -> bool {
        !match_pattern(&self.roles[role], graph).is_empty()
    }

    /// Distinct images of the mapped atoms of `role` in `graph`. Matches
    /// that differ only on unmapped atoms give identical products.
    fn mapped_images(&self, role: usize, graph: &MolecularGraph) -> Vec<Vec<(u32, usize)>> {
        let q = &self.roles[role];
        let idx: Vec<(u32, usize)> = self.role_maps[role]
            .iter()
            .map(|&m| (m, q.atom_with_map(m).expect("map belongs to role")))
            .collect();
        let set: BTreeSet<Vec<(u32, usize)>> = match_pattern(q, graph)
            .into_iter()
            .map(|mapping| idx.iter().map(|&(m, qa)| (m, mapping[qa])).collect())
            .collect();
        set.into_iter().collect()
    }
}

#[derive(Debug, Clone)]
pub struct Product {
    pub smiles: String,
    pub graph: MolecularGraph,
}

#[derive(Debug, Clone, Default)]
pub struct ApplyOutcome {
    /// Distinct products sorted by canonical SMILES.
    pub products: Vec<Product>,
    /// Match combinations whose edit script failed, with the reason.
    pub skipped: Vec<String>,
    pub truncated: bool,
}

fn run_edits(
    template: &ReactionTemplate,
    union: &MolecularGraph,
    place: &BTreeMap<u32, usize>,
) -> Result<MolecularGraph, String> {
    let (mut atoms, bonds): (Vec<Atom>, Vec<Bond>) = union.clone().into_parts();
    let mut bonds: Vec<Option<Bond>> = bonds.into_iter().map(Some).collect();
    let mut deleted = vec![false; atoms.len()];
    let find = |bonds: &[Option<Bond>], a: usize, b: usize| {
        bonds.iter().position(|x| x.is_some_and(|x| (x.a == a && x.b == b) || (x.a == b && x.b == a)))
    };
    for edit in &template.edits {
        match *edit {
            Edit::AddBond(ma, mb, order) => {
                let (a, b) = (place[&ma], place[&mb]);
                if find(&bonds, a, b).is_some() {
                    return Err(format!("{edit}: atoms already bonded"));
                }
                for x in [a, b] {
                    if atoms[x].bracket {
                        let used = order.valence().min(atoms[x].explicit_h);
                        atoms[x].explicit_h -= used;
                    }
                }
                bonds.push(Some(Bond::new(a, b, order)));
            }
            Edit::RemoveBond(ma, mb) => {
                let (a, b) = (place[&ma], place[&mb]);
                let i = find(&bonds, a, b).ok_or_else(|| format!("{edit}: no such bond"))?;
                let order = bonds[i].take().expect("found").order;
                for x in [a, b] {
                    if atoms[x].bracket {
                        atoms[x].explicit_h += order.valence();
                    }
                }
            }
            Edit::DeleteAtom(m) => {
                let a = place[&m];
                deleted[a] = true;
                for slot in bonds.iter_mut() {
                    if slot.is_some_and(|x| x.a == a || x.b == a) {
                        *slot = None;
                    }
                }
            }
            Edit::SetCharge(m, c) => atoms[place[&m]].formal_charge = c,
            Edit::SetAromatic(m, v) => atoms[place[&m]].aromatic = v,
            Edit::SetH(m, h) => {
                let a = &mut atoms[place[&m]];
                a.bracket = true;
                a.explicit_h = h;
            }
        }
    }
    // keep connected components that still hold a mapped atom
    let n = atoms.len();
    let live: Vec<Bond> = bonds.into_iter().flatten().collect();
    let mut adj = vec![Vec::new(); n];
    for b in &live {
        adj[b.a].push(b.b);
        adj[b.b].push(b.a);
    }
    let mut keep = vec![false; n];
    let mut stack: Vec<usize> = place.values().copied().filter(|&a| !deleted[a]).collect();
    for &s in &stack {
        keep[s] = true;
    }
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !keep[v] && !deleted[v] {
                keep[v] = true;
                stack.push(v);
            }
        }
    }
    let mut new_index = vec![usize::MAX; n];
    let mut out_atoms = Vec::new();
    for (i, atom) in atoms.into_iter().enumerate() {
        if keep[i] {
            new_index[i] = out_atoms.len();
            out_atoms.push(atom);
        }
    }
    let out_bonds: Vec<Bond> = live
        .into_iter()
        .filter(|b| keep[b.a] && keep[b.b])
        .map(|b| Bond::new(new_index[b.a], new_index[b.b], b.order))
        .collect();
    if out_atoms.is_empty() {
        return Err("edit script deleted every atom".into());
    }
    MolecularGraph::new(out_atoms, out_bonds).map_err(|e| format!("invalid product: {e}"))
}

/// Applies `template` to `reactants` (one graph per role, in role order):
/// every combination of role matches is edited on the disjoint union of the
/// reactants. Products are normalised through their canonical SMILES and
/// returned without duplicates.
pub fn apply_reaction(template: &ReactionTemplate, reactants: &[&MolecularGraph]) -> Result<ApplyOutcome, ReactionError> {
    if reactants.len() != template.arity() {
        return Err(ReactionError::ArityMismatch {
            template: template.id.clone(),
            expected: template.arity(),
            got: reactants.len(),
        });
    }
    let mut per_role = Vec::with_capacity(reactants.len());
    let mut union = MolecularGraph::new(Vec::new(), Vec::new()).expect("empty graph is valid");
    let mut offsets = Vec::new();
    for (role, g) in reactants.iter().enumerate() {
        let images = template.mapped_images(role, g);
        if images.is_empty() {
            return Err(ReactionError::NoMatch { template: template.id.clone(), role });
        }
        per_role.push(images);
        offsets.push(union.atom_count());
        union = union.disjoint_union(g);
    }

    let mut outcome = ApplyOutcome::default();
    let mut seen: BTreeMap<String, MolecularGraph> = BTreeMap::new();
    let mut idx = vec![0usize; per_role.len()];
    let mut tried = 0;
    'combos: loop {
        if tried == MAX_COMBINATIONS {
            outcome.truncated = true;
            break;
        }
        tried += 1;
        let mut place = BTreeMap::new();
        for (role, &k) in idx.iter().enumerate() {
            for &(m, a) in &per_role[role][k] {
                place.insert(m, a + offsets[role]);
            }
        }
        match run_edits(template, &union, &place) {
            Ok(g) => {
                let smiles = write_canonical_smiles(&g);
                if !seen.contains_key(&smiles) {
                    let normal = parse_smiles(&smiles).expect("canonical SMILES re-parses");
                    seen.insert(smiles, normal);
                }
            }
            Err(reason) => outcome.skipped.push(reason),
        }
        for role in (0..idx.len()).rev() {
            idx[role] += 1;
            if idx[role] < per_role[role].len() {
                continue 'combos;
            }
            idx[role] = 0;
        }
        break;
    }
    outcome.products = seen.into_iter().map(|(smiles, graph)| Product { smiles, graph }).collect();
    Ok(outcome)
}
