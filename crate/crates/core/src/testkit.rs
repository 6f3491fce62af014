//! Fixtures shared by tests, examples and benchmarks: random graphs, random
//! synthesis products and scorers trained on a fluorescence proxy.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{curate_task, ChemFluorRecord, Task};
use crate::fingerprint::SolventFeatures;
use crate::molgraph::{sp2_network_size, Atom, Bond, BondOrder, Element, MolecularGraph};
use crate::reactions::{apply_reaction, Product, ReactionSpace};
use crate::scorers::{mlp_train, ScorerError, ScorerSet, TrainConfig};

/// Random valid graph with up to `max_atoms` atoms drawn from B, C, N, O,
/// S, F and Cl, random aromatic flags, bond orders and ring closures. May
/// be disconnected.
pub fn random_graph<R: Rng + ?Sized>(rng: &mut R, max_atoms: usize) -> MolecularGraph {
    const ELEMENTS: [Element; 8] =
        [Element::C, Element::C, Element::C, Element::N, Element::O, Element::S, Element::F, Element::Cl];
    loop {
        let n = rng.random_range(1..=max_atoms.max(1));
        let atoms: Vec<Atom> = (0..n)
            .map(|_| {
                let e = if rng.random_bool(0.05) { Element::B } else { ELEMENTS[rng.random_range(0..ELEMENTS.len())] };
                if e.can_be_aromatic() && rng.random_bool(0.3) {
                    Atom::aromatic(e)
                } else {
                    Atom::new(e)
                }
            })
            .collect();
        let mut bonds: Vec<Bond> = Vec::new();
        let order = |rng: &mut R| match rng.random_range(0..10) {
            0..=5 => BondOrder::Single,
            6 | 7 => BondOrder::Double,
            8 => BondOrder::Triple,
            _ => BondOrder::Aromatic,
        };
        for i in 1..n {
            if rng.random_bool(0.9) {
                let j = rng.random_range(0..i);
                bonds.push(Bond::new(j, i, order(rng)));
            }
        }
        for _ in 0..rng.random_range(0..=n / 3) {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            if a != b && !bonds.iter().any(|x| (x.a == a && x.b == b) || (x.a == b && x.b == a)) {
                bonds.push(Bond::new(a, b, order(rng)));
            }
        }
        if let Ok(g) = MolecularGraph::new(atoms, bonds) {
            return g;
        }
    }
}

/// Proxy photophysics of a molecule: `(plqy, absorption nm, emission nm)`
/// with PLQY 0.8 when the sp² network has at least 12 atoms and 0.1
/// otherwise, absorption `280 + 12·sp²` and emission 60 nm above it.
pub fn proxy_labels(graph: &MolecularGraph) -> (f64, f64, f64) {
    let s = sp2_network_size(graph) as f64;
    let plqy = if s >= 12.0 { 0.8 } else { 0.1 };
    let abs = 280.0 + 12.0 * s;
    (plqy, abs, abs + 60.0)
}

/// One random reaction of `template`-compatible blocks, or a reaction of
/// `intermediate` with random partners when given.
fn random_step(space: &ReactionSpace, intermediate: Option<&Product>, rng: &mut ChaCha8Rng) -> Option<Product> {
    let lib = space.library.blocks();
    let usable = space.usable_templates();
    let mut choices: Vec<(usize, Option<usize>)> = Vec::new();
    match intermediate {
        None => choices.extend(usable.iter().map(|&t| (t, None))),
        Some(p) => {
            for &t in &usable {
                for r in 0..space.templates[t].arity() {
                    if space.templates[t].role_matches(r, &p.graph) {
                        choices.push((t, Some(r)));
                    }
                }
            }
        }
    }
    let &(t, fixed) = choices.choose(rng)?;
    let template = &space.templates[t];
    let mut graphs: Vec<&MolecularGraph> = Vec::new();
    for r in 0..template.arity() {
        if Some(r) == fixed {
            graphs.push(&intermediate.expect("fixed role implies intermediate").graph);
        } else {
            let c = space.compatible_blocks(t, r).ok()?;
            graphs.push(&lib[*c.choose(rng)?].graph);
        }
    }
    let outcome = apply_reaction(template, &graphs).ok()?;
    let k = rng.random_range(0..outcome.products.len().max(1));
    outcome.products.into_iter().nth(k)
}

/// `n` random products of `steps` reactions each (fewer when draws fail).
pub fn random_products(space: &ReactionSpace, n: usize, steps: usize, seed: u64) -> Vec<Product> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut current: Option<Product> = None;
        for _ in 0..steps {
            match random_step(space, current.as_ref(), &mut rng) {
                Some(p) => current = Some(p),
                None => break,
            }
        }
        out.extend(current);
    }
    out
}

/// Water records labelled by [`proxy_labels`]: the library blocks plus
/// random one- and two-step products.
pub fn proxy_records(space: &ReactionSpace, one_step: usize, two_step: usize, seed: u64) -> Vec<ChemFluorRecord> {
    let mut graphs: Vec<(String, MolecularGraph)> =
        space.library.blocks().iter().map(|b| (b.smiles.clone(), b.graph.clone())).collect();
    for p in random_products(space, one_step, 1, seed).into_iter().chain(random_products(space, two_step, 2, seed + 1)) {
        graphs.push((p.smiles, p.graph));
    }
    graphs.sort_by(|a, b| a.0.cmp(&b.0));
    graphs.dedup_by(|a, b| a.0 == b.0);
    graphs
        .into_iter()
        .map(|(smiles, g)| {
            let (plqy, abs, em) = proxy_labels(&g);
            ChemFluorRecord {
                smiles,
                solvent: Some(SolventFeatures::WATER),
                solvent_name: Some("water".into()),
                plqy: Some(plqy),
                absorption_nm: Some(abs),
                emission_nm: Some(em),
            }
        })
        .collect()
}

/// Small, quick predictor configuration for proxy scorers.
pub fn proxy_train_config(seed: u64) -> TrainConfig {
    TrainConfig { hidden_dim: 64, learning_rate: 0.01, epochs: 40, patience: 10, seed, ..TrainConfig::default() }
}

/// Scorers trained on `records` for all three tasks.
pub fn train_scorers(records: &[ChemFluorRecord], config: &TrainConfig) -> Result<ScorerSet, ScorerError> {
    let train = |task| -> Result<_, ScorerError> { mlp_train(&curate_task(records, task)?, config) };
    Ok(ScorerSet::from_models(train(Task::PlqyClass)?, train(Task::AbsReg)?, train(Task::EmReg)?))
}

/// Shuffled copy of `0..n`.
pub fn permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}
