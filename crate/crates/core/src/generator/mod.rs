//! Value-guided rollouts over building blocks and reaction templates.
//!
//! Each rollout picks a first block, then repeatedly picks a template role
//! and partner blocks for it, runs the reaction and either stops or reacts
//! the product again. Every choice is a softmax over the value
//! `V(N) = Σ w_k Z_k(N)` of the candidate nodes. Finished molecules are
//! scored by the reward predictors; the scores train the value models
//! through a replay buffer, and the temperature and property weights
//! follow the rolling similarity and success rates.

mod output;
mod policy;
mod route;
mod value;

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use output::{molecules_tsv, parse_molecules_tsv, run_log_tsv, usage_tsv, write_outputs, MOLECULES_HEADER, RUN_LOG_HEADER};
pub use policy::{
    property_scores, reward, sample_child, softmax, successes, tune_temperature, tune_weights, PropertyWeights, Sp2Reward,
};
pub use route::{replay_route, Reactant, Route, RouteStep};
pub use value::{
    initial_value_models, node_features, train_value_models, value, Member, Pending, ReplayBuffer, SynthesisNode,
};

use crate::fingerprint::{tanimoto, FeatureVector, Fingerprint, SolventFeatures};
use crate::molgraph::MolecularGraph;
use crate::reactions::{apply_reaction, ReactionError, ReactionSpace};
use crate::scorers::{MlpModel, ScorerError, ScorerSet, TrainConfig};

/// Number of scored properties: PLQY probability, absorption, emission, sp².
pub const PROPERTIES: usize = 4;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("no template has compatible blocks for all of its roles")]
    NoUsableTemplate,
    #[error("no rollout out of {0} produced a molecule")]
    NoSuccessfulRollout(usize),
    #[error("no candidates to sample from")]
    NoCandidates,
    #[error("non-finite node value {0}")]
    NonFiniteValue(f64),
    #[error("node {0} has no members")]
    EmptyNode(usize),
    #[error("{models} value models but {weights} weights")]
    ModelCount { models: usize, weights: usize },
    #[error("weights {0:?} are not on the simplex")]
    InvalidWeights(Vec<f64>),
    #[error("malformed route `{0}`")]
    BadRoute(String),
    #[error("route `{route}` does not replay: {reason}")]
    Replay { route: String, reason: String },
    #[error("malformed molecules file, line {line}: {reason}")]
    BadMoleculesFile { line: usize, reason: String },
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Reaction(#[from] ReactionError),
    #[error("cannot write {path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
}

fn value_net_defaults() -> TrainConfig {
    TrainConfig {
        hidden_dim: 32,
        learning_rate: 0.05,
        momentum: 0.0,
        epochs: 2,
        batch_size: 32,
        seed: 0,
        weight_init_scale: 0.1,
        patience: 2,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationConfig {
    pub n_rollouts: usize,
    pub tau_init: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    /// Target rolling nearest-neighbour similarity λ*.
    pub target_similarity: f64,
    /// Multiplicative gain η of the temperature controller.
    pub tau_gain: f64,
    /// Rollouts in the rolling similarity and success windows.
    pub window: usize,
    /// Rollouts between value-model updates.
    pub value_interval: usize,
    pub buffer_capacity: usize,
    pub value_net: TrainConfig,
    /// Reaction steps per molecule.
    pub max_steps: usize,
    pub weight_floor: f64,
    pub sp2_reward: Sp2Reward,
    pub sp2_threshold: usize,
    pub wavelength_min: f64,
    pub wavelength_max: f64,
    pub plqy_success: f64,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            n_rollouts: 10_000,
            tau_init: 0.1,
            tau_min: 0.005,
            tau_max: 2.0,
            target_similarity: 0.6,
            tau_gain: 0.01,
            window: 100,
            value_interval: 50,
            buffer_capacity: 10_000,
            value_net: value_net_defaults(),
            max_steps: 2,
            weight_floor: 0.05,
            sp2_reward: Sp2Reward::Clamp,
            sp2_threshold: 12,
            wavelength_min: 420.0,
            wavelength_max: 750.0,
            plqy_success: 0.5,
            seed: 0,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        let bad = |what: &str| Err(GeneratorError::InvalidConfig(what.to_string()));
        if !(self.tau_min > 0.0 && self.tau_min <= self.tau_init && self.tau_init <= self.tau_max && self.tau_max.is_finite()) {
            return bad("temperatures must satisfy 0 < tau_min <= tau_init <= tau_max");
        }
        if !(self.target_similarity > 0.0 && self.target_similarity < 1.0) {
            return bad("target_similarity must lie in (0, 1)");
        }
        if !(self.tau_gain >= 0.0 && self.tau_gain.is_finite()) {
            return bad("tau_gain must be non-negative");
        }
        if self.window == 0 || self.value_interval == 0 || self.max_steps == 0 || self.sp2_threshold == 0 {
            return bad("window, value_interval, max_steps and sp2_threshold must be positive");
        }
        if !(self.weight_floor >= 0.0 && self.weight_floor * PROPERTIES as f64 <= 1.0) {
            return bad("weight_floor must lie in [0, 1/4]");
        }
        if !(self.wavelength_min <= self.wavelength_max) {
            return bad("wavelength_min must not exceed wavelength_max");
        }
        self.value_net.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedMolecule {
    pub smiles: String,
    pub route: Route,
    /// M₁..M₄.
    pub scores: [f64; PROPERTIES],
    /// `p(m)` under the weights in force when the molecule was made.
    pub p: f64,
    pub rollout: usize,
    /// Raw predictions: PLQY probability, absorption nm, emission nm, sp² size.
    pub raw: [f64; PROPERTIES],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RolloutStatus {
    New,
    Duplicate,
    DeadEnd,
}

impl RolloutStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RolloutStatus::New => "new",
            RolloutStatus::Duplicate => "duplicate",
            RolloutStatus::DeadEnd => "dead_end",
        }
    }
}

/// State after one rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutLog {
    pub rollout: usize,
    pub status: RolloutStatus,
    pub tau: f64,
    pub weights: [f64; PROPERTIES],
    pub success_rates: [f64; PROPERTIES],
    /// Nearest-neighbour Tanimoto to earlier molecules; `None` for the first
    /// molecule and for dead ends.
    pub similarity: Option<f64>,
    pub rolling_similarity: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationStats {
    pub rollouts: usize,
    pub molecules: usize,
    pub duplicates: usize,
    pub dead_ends: usize,
    pub value_updates: usize,
    pub final_tau: f64,
    pub final_weights: [f64; PROPERTIES],
}

#[derive(Debug, Clone, Default)]
pub struct GenerationRun {
    /// Unique molecules in order of first appearance.
    pub molecules: Vec<GeneratedMolecule>,
    pub log: Vec<RolloutLog>,
    /// Template id to the number of steps using it across `molecules`.
    pub usage: BTreeMap<String, usize>,
    pub stats: GenerationStats,
}

/// A completed rollout before scoring.
struct Built {
    member: Member,
    route: Route,
    path: Vec<FeatureVector>,
}

enum Candidate {
    Node(SynthesisNode),
    Stop,
}

/// Read-only search context plus the mutable controller state.
struct Engine<'a> {
    space: &'a ReactionSpace,
    solvent: SolventFeatures,
    config: &'a GenerationConfig,
    blocks: Vec<Member>,
    block_roles: Vec<Vec<(usize, usize)>>,
    start_blocks: Vec<usize>,
    usable: Vec<usize>,
    product_roles: HashMap<String, Vec<(usize, usize)>>,
    models: Vec<MlpModel>,
    /// Z₁..Z₄ per node key; cleared whenever the models change.
    z_cache: HashMap<String, [f64; PROPERTIES]>,
    weights: PropertyWeights,
    tau: f64,
    next_id: usize,
}

impl<'a> Engine<'a> {
    fn new(space: &'a ReactionSpace, solvent: SolventFeatures, config: &'a GenerationConfig) -> Result<Self, GeneratorError> {
        let usable = space.usable_templates();
        if usable.is_empty() {
            return Err(GeneratorError::NoUsableTemplate);
        }
        let lib = space.library.blocks();
        let blocks: Vec<Member> =
            lib.iter().enumerate().map(|(i, b)| Member::new(b.smiles.clone(), b.graph.clone(), Some(i))).collect();
        let mut block_roles = vec![Vec::new(); lib.len()];
        for &t in &usable {
            for r in 0..space.templates[t].arity() {
                for &b in space.compatible_blocks(t, r)? {
                    block_roles[b].push((t, r));
                }
            }
        }
        let start_blocks = (0..lib.len()).filter(|&b| !block_roles[b].is_empty()).collect();
        let value_cfg = TrainConfig { seed: config.seed, ..config.value_net.clone() };
        Ok(Engine {
            space,
            solvent,
            config,
            blocks,
            block_roles,
            start_blocks,
            usable,
            product_roles: HashMap::new(),
            models: initial_value_models(&value_cfg, &solvent, config.seed),
            z_cache: HashMap::new(),
            weights: PropertyWeights::uniform(),
            tau: config.tau_init,
            next_id: 1,
        })
    }

    fn node(&mut self, members: Vec<Member>, pending: Option<Pending>, depth: usize) -> SynthesisNode {
        self.next_id += 1;
        SynthesisNode { id: self.next_id, members, pending, depth }
    }

    /// (template, role) pairs `member` can fill.
    fn roles_of(&mut self, member: &Member) -> Vec<(usize, usize)> {
        if let Some(b) = member.block {
            return self.block_roles[b].clone();
        }
        if let Some(r) = self.product_roles.get(&member.smiles) {
            return r.clone();
        }
        let mut roles = Vec::new();
        for &t in &self.usable {
            let tmpl = &self.space.templates[t];
            for r in 0..tmpl.arity() {
                if tmpl.role_matches(r, &member.graph) {
                    roles.push((t, r));
                }
            }
        }
        self.product_roles.insert(member.smiles.clone(), roles.clone());
        roles
    }

    /// Values of `nodes`; uncached encodings are evaluated in parallel.
    fn values(&mut self, nodes: &[&SynthesisNode]) -> Result<Vec<f64>, GeneratorError> {
        let keys: Vec<String> = nodes.iter().map(|n| n.key()).collect();
        let mut seen = HashSet::new();
        let missing: Vec<usize> =
            (0..nodes.len()).filter(|&i| !self.z_cache.contains_key(&keys[i]) && seen.insert(&keys[i])).collect();
        let solvent = self.solvent;
        let models = &self.models;
        let fresh: Vec<Result<[f64; PROPERTIES], GeneratorError>> = missing
            .par_iter()
            .map(|&i| {
                let x = node_features(nodes[i], &solvent)?;
                let mut z = [0.0; PROPERTIES];
                for (k, m) in models.iter().enumerate() {
                    z[k] = m.forward(&x)?;
                }
                Ok(z)
            })
            .collect();
        for (&i, z) in missing.iter().zip(fresh) {
            self.z_cache.insert(keys[i].clone(), z?);
        }
        Ok(keys.iter().map(|k| self.weights.combine(&self.z_cache[k])).collect())
    }

    fn choose(&mut self, candidates: &[Candidate], stop_node: Option<&SynthesisNode>, rng: &mut ChaCha8Rng) -> Result<usize, GeneratorError> {
        let nodes: Vec<&SynthesisNode> = candidates
            .iter()
            .map(|c| match c {
                Candidate::Node(n) => n,
                Candidate::Stop => stop_node.expect("stop candidate has a state node"),
            })
            .collect();
        let v = self.values(&nodes)?;
        sample_child(&v, self.tau, rng)
    }

    /// Children of a finished state: every (template, role) the current
    /// molecule fits, paired with each block for the next open role.
    fn expand(&mut self, current: &Member, depth: usize) -> Result<Vec<Candidate>, GeneratorError> {
        let mut out = Vec::new();
        for (t, r) in self.roles_of(current) {
            let arity = self.space.templates[t].arity();
            let mut filled = vec![None; arity];
            filled[r] = Some(0);
            let pending = Pending { template: t, filled };
            match pending.next_role() {
                None => {
                    let n = self.node(vec![current.clone()], Some(pending), depth);
                    out.push(Candidate::Node(n));
                }
                Some(next) => {
                    for &b in self.space.compatible_blocks(t, next)? {
                        let mut p = pending.clone();
                        p.filled[next] = Some(1);
                        let n = self.node(vec![current.clone(), self.blocks[b].clone()], Some(p), depth);
                        out.push(Candidate::Node(n));
                    }
                }
            }
        }
        Ok(out)
    }

    fn rollout(&mut self, rng: &mut ChaCha8Rng) -> Result<Option<Built>, GeneratorError> {
        let mut path = Vec::new();
        let starts: Vec<Candidate> = self
            .start_blocks
            .clone()
            .into_iter()
            .map(|b| Candidate::Node(self.node(vec![self.blocks[b].clone()], None, 0)))
            .collect();
        let pick = self.choose(&starts, None, rng)?;
        let Candidate::Node(first) = &starts[pick] else { unreachable!() };
        path.push(node_features(first, &self.solvent)?);
        let mut current = first.members[0].clone();
        let mut route = Route::default();
        let mut state = first.clone();

        while route.steps.len() < self.config.max_steps {
            let depth = route.steps.len();
            let mut candidates = self.expand(&current, depth)?;
            if depth > 0 {
                candidates.push(Candidate::Stop);
            }
            if candidates.is_empty() {
                return Ok(None);
            }
            let pick = self.choose(&candidates, Some(&state), rng)?;
            let mut node = match candidates.swap_remove(pick) {
                Candidate::Stop => break,
                Candidate::Node(n) => n,
            };
            path.push(node_features(&node, &self.solvent)?);
            let mut pending = node.pending.clone().expect("expanded nodes carry a template");
            while let Some(role) = pending.next_role() {
                let blocks = self.space.compatible_blocks(pending.template, role)?.to_vec();
                if blocks.is_empty() {
                    return Ok(None);
                }
                let mut options: Vec<Candidate> = blocks
                    .iter()
                    .map(|&b| {
                        let mut members = node.members.clone();
                        members.push(self.blocks[b].clone());
                        let mut p = pending.clone();
                        p.filled[role] = Some(members.len() - 1);
                        Candidate::Node(self.node(members, Some(p), depth))
                    })
                    .collect();
                let pick = self.choose(&options, None, rng)?;
                let Candidate::Node(n) = options.swap_remove(pick) else { unreachable!() };
                path.push(node_features(&n, &self.solvent)?);
                pending = n.pending.clone().expect("pending kept");
                node = n;
            }

            let template = &self.space.templates[pending.template];
            let slots: Vec<&Member> = pending.filled.iter().map(|s| &node.members[s.expect("all roles filled")]).collect();
            let graphs: Vec<&MolecularGraph> = slots.iter().map(|m| m.graph.as_ref()).collect();
            let outcome = match apply_reaction(template, &graphs) {
                Ok(o) => o,
                Err(ReactionError::NoMatch { .. }) => return Ok(None),
                Err(e) => return Err(e.into()),
            };
            if outcome.products.is_empty() {
                return Ok(None);
            }
            let k = rng.random_range(0..outcome.products.len());
            let reactants = slots
                .iter()
                .map(|m| match m.block {
                    Some(b) => Reactant::Block(self.space.library.blocks()[b].id.clone()),
                    None => Reactant::Intermediate,
                })
                .collect();
            route.steps.push(RouteStep { template: template.id.clone(), reactants, product: k });
            let product = outcome.products.into_iter().nth(k).expect("index in range");
            current = Member::new(product.smiles, product.graph, None);
            state = self.node(vec![current.clone()], None, depth + 1);
            path.push(node_features(&state, &self.solvent)?);
        }
        Ok(Some(Built { member: current, route, path }))
    }
}

fn rolling_mean<T: Copy + Into<f64>>(window: &VecDeque<T>) -> Option<f64> {
    (!window.is_empty()).then(|| window.iter().map(|&x| x.into()).sum::<f64>() / window.len() as f64)
}

fn push_window<T>(window: &mut VecDeque<T>, value: T, cap: usize) {
    if window.len() == cap {
        window.pop_front();
    }
    window.push_back(value);
}

/// Nearest-neighbour Tanimoto of `fp` against `previous`.
fn nearest(fp: &Fingerprint, previous: &[Fingerprint]) -> Option<f64> {
    previous.par_iter().map(|p| tanimoto(fp, p).expect("same length")).reduce_with(f64::max)
}

/// Runs `config.n_rollouts` rollouts. Molecules are scored with `scorers`
/// in `solvent`; output is identical for a given seed whatever the thread
/// count.
pub fn generate(
    config: &GenerationConfig,
    space: &ReactionSpace,
    scorers: &ScorerSet,
    solvent: &SolventFeatures,
) -> Result<GenerationRun, GeneratorError> {
    config.validate()?;
    let mut run = GenerationRun {
        stats: GenerationStats { final_tau: config.tau_init, final_weights: PropertyWeights::uniform().as_array(), ..Default::default() },
        ..Default::default()
    };
    if config.n_rollouts == 0 {
        return Ok(run);
    }
    let mut engine = Engine::new(space, *solvent, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut seen: HashSet<String> = HashSet::new();
    let mut fps: Vec<Fingerprint> = Vec::new();
    let mut sims: VecDeque<f64> = VecDeque::new();
    let mut succ: VecDeque<[bool; PROPERTIES]> = VecDeque::new();
    let value_cfg = TrainConfig { seed: config.seed, ..config.value_net.clone() };
    let mut produced = 0;

    for i in 0..config.n_rollouts {
        let mut entry = RolloutLog {
            rollout: i,
            status: RolloutStatus::DeadEnd,
            tau: engine.tau,
            weights: engine.weights.as_array(),
            success_rates: [0.0; PROPERTIES],
            similarity: None,
            rolling_similarity: None,
        };
        match engine.rollout(&mut rng)? {
            None => run.stats.dead_ends += 1,
            Some(built) => {
                produced += 1;
                let raw = scorers.predict(&built.member.graph, solvent)?;
                let (scores, p) = reward(&raw, &engine.weights, config);
                let fp = &built.member.fingerprint;
                let is_new = seen.insert(built.member.smiles.clone());
                entry.similarity = if is_new { nearest(fp, &fps) } else { Some(1.0) };
                if let Some(s) = entry.similarity {
                    push_window(&mut sims, s, config.window);
                }
                push_window(&mut succ, successes(&raw, config), config.window);
                for x in built.path {
                    buffer.push(x, scores);
                }
                if is_new {
                    entry.status = RolloutStatus::New;
                    fps.push(fp.clone());
                    for step in &built.route.steps {
                        *run.usage.entry(step.template.clone()).or_insert(0) += 1;
                    }
                    run.molecules.push(GeneratedMolecule {
                        smiles: built.member.smiles,
                        route: built.route,
                        scores,
                        p,
                        rollout: i,
                        raw,
                    });
                } else {
                    entry.status = RolloutStatus::Duplicate;
                    run.stats.duplicates += 1;
                }
                engine.tau = tune_temperature(sims.make_contiguous(), engine.tau, config);
                let mut rates = [0.0; PROPERTIES];
                for (k, r) in rates.iter_mut().enumerate() {
                    *r = succ.iter().filter(|s| s[k]).count() as f64 / succ.len() as f64;
                }
                engine.weights = tune_weights(&rates, config.weight_floor);
            }
        }
        entry.tau = engine.tau;
        entry.weights = engine.weights.as_array();
        entry.rolling_similarity = rolling_mean(&sims);
        if !succ.is_empty() {
            for k in 0..PROPERTIES {
                entry.success_rates[k] = succ.iter().filter(|s| s[k]).count() as f64 / succ.len() as f64;
            }
        }
        run.log.push(entry);
        if (i + 1) % config.value_interval == 0 && !buffer.is_empty() {
            let cfg = TrainConfig { seed: value_cfg.seed.wrapping_add(i as u64), ..value_cfg.clone() };
            let losses = train_value_models(&mut engine.models, &buffer, &cfg)?;
            log::debug!("rollout {}: value MSE {:?}", i + 1, losses);
            engine.z_cache.clear();
            run.stats.value_updates += 1;
        }
        if (i + 1) % 500 == 0 {
            log::info!("rollout {}/{}: {} molecules, tau {:.4}", i + 1, config.n_rollouts, run.molecules.len(), engine.tau);
        }
    }
    if produced == 0 {
        return Err(GeneratorError::NoSuccessfulRollout(config.n_rollouts));
    }
    run.stats.rollouts = config.n_rollouts;
    run.stats.molecules = run.molecules.len();
    run.stats.final_tau = engine.tau;
    run.stats.final_weights = engine.weights.as_array();
    Ok(run)
}

/// One-step products of uniformly drawn template and blocks, retrying
/// failed draws up to 100 times per sample. Scored under uniform weights.
pub fn sample_baseline(
    space: &ReactionSpace,
    scorers: &ScorerSet,
    solvent: &SolventFeatures,
    n: usize,
    seed: u64,
    config: &GenerationConfig,
) -> Result<Vec<GeneratedMolecule>, GeneratorError> {
    let usable = space.usable_templates();
    if usable.is_empty() {
        return Err(GeneratorError::NoUsableTemplate);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lib = space.library.blocks();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        for _ in 0..100 {
            let t = usable[rng.random_range(0..usable.len())];
            let template = &space.templates[t];
            let mut ids = Vec::with_capacity(template.arity());
            for r in 0..template.arity() {
                let c = space.compatible_blocks(t, r)?;
                ids.push(c[rng.random_range(0..c.len())]);
            }
            let graphs: Vec<&MolecularGraph> = ids.iter().map(|&b| &lib[b].graph).collect();
            let outcome = apply_reaction(template, &graphs)?;
            if outcome.products.is_empty() {
                continue;
            }
            let k = rng.random_range(0..outcome.products.len());
            let product = &outcome.products[k];
            let raw = scorers.predict(&product.graph, solvent)?;
            let (scores, p) = reward(&raw, &PropertyWeights::uniform(), config);
            let route = Route {
                steps: vec![RouteStep {
                    template: template.id.clone(),
                    reactants: ids.iter().map(|&b| Reactant::Block(lib[b].id.clone())).collect(),
                    product: k,
                }],
            };
            out.push(GeneratedMolecule { smiles: product.smiles.clone(), route, scores, p, rollout: i, raw });
            break;
        }
    }
    Ok(out)
}
