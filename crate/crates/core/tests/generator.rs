use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::OnceLock;

use fluorogen::fingerprint::SolventFeatures;
use fluorogen::generator::{
    generate, initial_value_models, molecules_tsv, node_features, replay_route, run_log_tsv, sample_baseline,
    train_value_models, value, GenerationConfig, Member, ReplayBuffer, SynthesisNode,
};
use fluorogen::molgraph::{parse_smiles, sp2_network_size};
use fluorogen::reactions::{
    ingest_building_blocks, ingest_reactions, parse_building_blocks, parse_reactions, ReactionSpace,
};
use fluorogen::scorers::{ScorerSet, TrainConfig};
use fluorogen::testkit::{proxy_records, train_scorers};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn toy() -> &'static (ReactionSpace, ScorerSet) {
    static TOY: OnceLock<(ReactionSpace, ScorerSet)> = OnceLock::new();
    TOY.get_or_init(|| {
        let (lib, _) = ingest_building_blocks(&data("toy_blocks.tsv")).unwrap();
        let (templates, _) = ingest_reactions(&data("toy_reactions.toml")).unwrap();
        let space = ReactionSpace::new(templates, lib);
        let records = proxy_records(&space, 300, 300, 3);
        let cfg = TrainConfig { hidden_dim: 16, epochs: 8, seed: 3, ..TrainConfig::default() };
        let scorers = train_scorers(&records, &cfg).unwrap();
        (space, scorers)
    })
}

fn small(n: usize, seed: u64) -> GenerationConfig {
    GenerationConfig { n_rollouts: n, seed, value_interval: 25, ..GenerationConfig::default() }
}

#[test]
fn zero_rollouts_give_an_empty_run() {
    let (space, scorers) = toy();
    let run = generate(&small(0, 1), space, scorers, &SolventFeatures::WATER).unwrap();
    assert!(run.molecules.is_empty() && run.log.is_empty() && run.usage.is_empty());
    assert_eq!(run.stats.rollouts, 0);
}

#[test]
fn routes_replay_and_smiles_are_unique() {
    let (space, scorers) = toy();
    let run = generate(&small(300, 2), space, scorers, &SolventFeatures::WATER).unwrap();
    assert!(run.molecules.len() > 100);
    let mut seen = HashSet::new();
    for m in &run.molecules {
        assert!(seen.insert(m.smiles.clone()), "duplicate {}", m.smiles);
        assert_eq!(replay_route(&m.route, space).unwrap().smiles, m.smiles, "{}", m.route);
        assert!(!m.route.steps.is_empty() && m.route.steps.len() <= 2);
    }
    let steps: usize = run.molecules.iter().map(|m| m.route.steps.len()).sum();
    assert_eq!(run.usage.values().sum::<usize>(), steps);
    assert_eq!(run.stats.molecules + run.stats.duplicates + run.stats.dead_ends, 300);
}

#[test]
fn same_seed_same_bytes_whatever_the_thread_count() {
    let (space, scorers) = toy();
    let run_in = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| generate(&small(150, 4), space, scorers, &SolventFeatures::WATER).unwrap())
    };
    let (a, b) = (run_in(1), run_in(4));
    assert_eq!(molecules_tsv(&a.molecules), molecules_tsv(&b.molecules));
    assert_eq!(run_log_tsv(&a.log), run_log_tsv(&b.log));
    let c = generate(&small(150, 5), space, scorers, &SolventFeatures::WATER).unwrap();
    assert_ne!(molecules_tsv(&a.molecules), molecules_tsv(&c.molecules));
}

#[test]
fn temperature_stays_within_bounds_and_weights_on_the_simplex() {
    let (space, scorers) = toy();
    let config = GenerationConfig { tau_gain: 20.0, tau_min: 0.02, tau_max: 0.15, ..small(200, 6) };
    let run = generate(&config, space, scorers, &SolventFeatures::WATER).unwrap();
    let mut hit_bound = false;
    for e in &run.log {
        assert!(e.tau >= config.tau_min && e.tau <= config.tau_max, "{}", e.tau);
        hit_bound |= e.tau == config.tau_min || e.tau == config.tau_max;
        assert!((e.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(e.weights.iter().all(|&w| w >= config.weight_floor - 1e-12));
    }
    assert!(hit_bound, "an aggressive gain should reach a bound");
}

#[test]
fn baseline_is_one_step_and_seeded() {
    let (space, scorers) = toy();
    let cfg = small(1, 1);
    let a = sample_baseline(space, scorers, &SolventFeatures::WATER, 50, 9, &cfg).unwrap();
    let b = sample_baseline(space, scorers, &SolventFeatures::WATER, 50, 9, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 50);
    assert!(a.iter().all(|m| m.route.steps.len() == 1));
}

#[test]
fn single_combination_library_yields_that_route() {
    let (lib, issues) = parse_building_blocks("id\tsmiles\nA1\tCC(=O)O\nN1\tCCN\nX1\tCCCC\n").unwrap();
    assert!(issues.is_empty());
    let toml = r#"
[[reaction]]
id = "amide"
arity = 2
roles = ["[C;D3:1](=O)[O;H1:2]", "[N;H2,H1;+0;!a:3]"]
edits = ["delete-atom 2", "add-bond 1 3 single"]
"#;
    let (templates, issues) = parse_reactions(toml).unwrap();
    assert!(issues.is_empty());
    let space = ReactionSpace::new(templates, lib);
    let (_, scorers) = toy();
    let config = GenerationConfig { max_steps: 1, ..small(20, 7) };
    let run = generate(&config, &space, scorers, &SolventFeatures::WATER).unwrap();
    assert_eq!(run.molecules.len(), 1);
    assert_eq!(run.molecules[0].smiles, "CCNC(C)=O");
    assert_eq!(run.molecules[0].route.to_string(), "amide[A1,N1]#0");
    assert_eq!(run.stats.duplicates, 19);
}

fn block_node(smiles: &str, id: usize) -> SynthesisNode {
    let g = parse_smiles(smiles).unwrap();
    SynthesisNode { id, members: vec![Member::new(smiles.to_string(), g, Some(id))], pending: None, depth: 0 }
}

fn value_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        hidden_dim: 16,
        learning_rate: 0.02,
        momentum: 0.9,
        epochs,
        batch_size: 16,
        patience: epochs,
        ..TrainConfig::default()
    }
}

#[test]
fn constant_targets_are_learned() {
    let solvent = SolventFeatures::WATER;
    let (space, _) = toy();
    let mut buffer = ReplayBuffer::new(1000);
    for (i, b) in space.library.blocks().iter().take(200).enumerate() {
        let node = block_node(&b.smiles, i);
        buffer.push(node_features(&node, &solvent).unwrap(), [0.7; 4]);
    }
    let cfg = value_cfg(1000);
    let mut models = initial_value_models(&cfg, &solvent, 1);
    let losses = train_value_models(&mut models, &buffer, &cfg).unwrap();
    for (before, after) in &losses {
        assert!(after <= before);
    }
    for (k, m) in models.iter().enumerate() {
        for (x, _) in buffer.iter() {
            let v = value(x, std::slice::from_ref(m), &[1.0]).unwrap();
            assert!((v - 0.7).abs() < 1e-2, "model {k}: {v}");
        }
    }
}

#[test]
fn high_sp2_nodes_rank_above_low_sp2_nodes() {
    let solvent = SolventFeatures::WATER;
    let (space, _) = toy();
    let blocks = space.library.blocks();
    let mut buffer = ReplayBuffer::new(1000);
    let (mut high, mut low) = (None, None);
    for (i, b) in blocks.iter().enumerate() {
        let big = sp2_network_size(&b.graph) >= 12;
        if i % 3 == 0 {
            // held out
            if big && high.is_none() {
                high = Some(i);
            } else if !big && low.is_none() && sp2_network_size(&b.graph) <= 6 {
                low = Some(i);
            }
            continue;
        }
        let target = if big { 1.0 } else { 0.0 };
        buffer.push(node_features(&block_node(&b.smiles, i), &solvent).unwrap(), [target; 4]);
    }
    let cfg = value_cfg(20);
    let mut models = initial_value_models(&cfg, &solvent, 2);
    train_value_models(&mut models, &buffer, &cfg).unwrap();
    let (hi, lo) = (high.unwrap(), low.unwrap());
    let z = |i: usize, k: usize| {
        let x = node_features(&block_node(&blocks[i].smiles, i), &solvent).unwrap();
        value(&x, std::slice::from_ref(&models[k]), &[1.0]).unwrap()
    };
    for k in 0..4 {
        assert!(z(hi, k) > z(lo, k), "model {k}: {} ({}) vs {} ({})", z(hi, k), blocks[hi].smiles, z(lo, k), blocks[lo].smiles);
    }
}

#[test]
fn node_features_union_member_bits() {
    let solvent = SolventFeatures::WATER;
    let a = block_node("c1ccccc1Br", 0);
    let b = block_node("CCN", 1);
    let both = SynthesisNode { id: 2, members: vec![a.members[0].clone(), b.members[0].clone()], pending: None, depth: 0 };
    let (fa, fb, fab) =
        (node_features(&a, &solvent).unwrap(), node_features(&b, &solvent).unwrap(), node_features(&both, &solvent).unwrap());
    for i in 0..2048 {
        assert_eq!(fab.get(i), fa.get(i).max(fb.get(i)));
    }
    assert_eq!(fab.get(2048), solvent.sp);
}
