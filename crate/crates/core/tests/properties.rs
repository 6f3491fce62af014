use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::OnceLock;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fluorogen::dataset::{curate_task, ingest_chemfluor_str, ColumnMap, Task};
use fluorogen::filters::{cluster_tanimoto, filter_scored, novelty, FilterThresholds, ScoredMolecule};
use fluorogen::fingerprint::{default_fingerprint, tanimoto, Fingerprint, FeatureVector, SolventFeatures};
use fluorogen::generator::{
    initial_value_models, softmax, train_value_models, tune_temperature, tune_weights, GenerationConfig, ReplayBuffer,
};
use fluorogen::molgraph::{parse_smiles, perceive_hybridization, sp2_network_size, write_canonical_smiles};
use fluorogen::reactions::{apply_reaction, ingest_building_blocks, ingest_reactions, ReactionSpace};
use fluorogen::scorers::{mlp_train, roc_auc, TrainConfig};
use fluorogen::stats::mann_whitney_greater;
use fluorogen::testkit::{permutation, random_graph};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn space() -> &'static ReactionSpace {
    static SPACE: OnceLock<ReactionSpace> = OnceLock::new();
    SPACE.get_or_init(|| {
        let (lib, _) = ingest_building_blocks(&data("toy_blocks.tsv")).unwrap();
        let (templates, _) = ingest_reactions(&data("toy_reactions.toml")).unwrap();
        ReactionSpace::new(templates, lib)
    })
}

fn fingerprint_of(seed: u64) -> Fingerprint {
    default_fingerprint(&random_graph(&mut rng(seed), 16))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn canonical_smiles_round_trips(seed in any::<u64>()) {
        let g = random_graph(&mut rng(seed), 14);
        let s = write_canonical_smiles(&g);
        let back = parse_smiles(&s).unwrap();
        prop_assert_eq!(back.atom_count(), g.atom_count());
        prop_assert_eq!(back.bond_count(), g.bond_count());
        prop_assert_eq!(write_canonical_smiles(&back), s);
    }

    #[test]
    fn permutation_invariance_of_graph_functions(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = random_graph(&mut r, 14);
        let perm = permutation(&mut r, g.atom_count());
        let p = g.permuted(&perm);
        prop_assert_eq!(sp2_network_size(&p), sp2_network_size(&g));
        prop_assert_eq!(write_canonical_smiles(&p), write_canonical_smiles(&g));
        prop_assert_eq!(default_fingerprint(&p), default_fingerprint(&g));
        // perceived hybridization moves with its atom
        let (hg, hp) = (perceive_hybridization(&g), perceive_hybridization(&p));
        let again = perceive_hybridization(&hg);
        prop_assert_eq!(again.atoms(), hg.atoms());
        for (old, &new) in perm.iter().enumerate() {
            prop_assert_eq!(hg.atoms()[old].hybridization, hp.atoms()[new].hybridization);
        }
    }

    #[test]
    fn tanimoto_properties(a in any::<u64>(), b in any::<u64>()) {
        let (fa, fb) = (fingerprint_of(a), fingerprint_of(b));
        let ab = tanimoto(&fa, &fb).unwrap();
        prop_assert_eq!(ab, tanimoto(&fb, &fa).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        if fa.popcount() > 0 {
            prop_assert_eq!(tanimoto(&fa, &fa).unwrap(), 1.0);
        }
    }

    #[test]
    fn adding_a_fragment_keeps_bits(a in any::<u64>(), b in any::<u64>()) {
        let (ga, gb) = (random_graph(&mut rng(a), 12), random_graph(&mut rng(b), 12));
        let (fa, fab) = (default_fingerprint(&ga), default_fingerprint(&ga.disjoint_union(&gb)));
        prop_assert!(fa.ones().all(|bit| fab.get(bit)));
    }

    #[test]
    fn roc_auc_ignores_monotone_transforms(scores in prop::collection::vec(-5.0f64..5.0, 4..40), seed in any::<u64>()) {
        let mut r = rng(seed);
        let labels: Vec<bool> = (0..scores.len()).map(|i| i % 2 == 0 || rand::Rng::random_bool(&mut r, 0.3)).collect();
        prop_assume!(labels.iter().any(|&l| !l));
        let squashed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() + 7.0).collect();
        prop_assert_eq!(roc_auc(&scores, &labels).unwrap(), roc_auc(&squashed, &labels).unwrap());
    }

    #[test]
    fn softmax_is_a_distribution(values in prop::collection::vec(-50.0f64..50.0, 1..12), tau in 0.005f64..5.0) {
        let p = softmax(&values, tau).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for i in 0..values.len() {
            for j in 0..values.len() {
                if values[i] > values[j] {
                    prop_assert!(p[i] >= p[j]);
                }
            }
        }
    }

    #[test]
    fn weight_controller_stays_on_the_floored_simplex(rates in prop::array::uniform4(0.0f64..=1.0), floor in 0.0f64..0.25) {
        let w = tune_weights(&rates, floor).as_array();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|&x| x >= floor - 1e-12));
        let lowest = (0..4).min_by(|&a, &b| rates[a].total_cmp(&rates[b])).unwrap();
        let top = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(w[lowest] >= top - 1e-12);
    }

    #[test]
    fn temperature_controller_stays_in_bounds(history in prop::collection::vec(0.0f64..=1.0, 0..50), tau in 0.001f64..3.0) {
        let cfg = GenerationConfig { tau_gain: 0.5, ..GenerationConfig::default() };
        let t = tune_temperature(&history, tau, &cfg);
        if history.is_empty() {
            prop_assert_eq!(t, tau);
        } else {
            prop_assert!(t >= cfg.tau_min && t <= cfg.tau_max);
        }
    }

    #[test]
    fn mann_whitney_is_antisymmetric(x in prop::collection::vec(0u8..20, 1..30), y in prop::collection::vec(0u8..20, 1..30)) {
        let (x, y): (Vec<f64>, Vec<f64>) = (x.into_iter().map(f64::from).collect(), y.into_iter().map(f64::from).collect());
        let (a, b) = (mann_whitney_greater(&x, &y).unwrap(), mann_whitney_greater(&y, &x).unwrap());
        prop_assert!((a.u + b.u - (x.len() * y.len()) as f64).abs() < 1e-9);
        prop_assert!((a.p_greater + b.p_greater - 1.0).abs() < 1e-9);
    }
}

fn scored(seed: u64, n: usize) -> Vec<ScoredMolecule> {
    use rand::Rng;
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let fp = fingerprint_of(seed ^ i as u64);
            ScoredMolecule {
                smiles: format!("m{i}"),
                fingerprint: fp,
                plqy_prob: r.random(),
                absorption_nm: r.random_range(380.0..780.0),
                emission_nm: r.random_range(380.0..780.0),
                sp2: r.random_range(0..24),
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn survivor_set_ignores_input_order(seed in any::<u64>(), n in 0usize..80) {
        let ms = scored(seed, n);
        let perm = permutation(&mut rng(seed.wrapping_add(1)), n);
        let shuffled: Vec<ScoredMolecule> = perm.iter().map(|&i| ms[i].clone()).collect();
        let t = FilterThresholds::default();
        let (a, ra) = filter_scored(ms, &t);
        let (b, rb) = filter_scored(shuffled, &t);
        prop_assert_eq!(ra, rb);
        let names = |v: &[ScoredMolecule]| v.iter().map(|m| m.smiles.clone()).collect::<BTreeSet<_>>();
        prop_assert_eq!(names(&a), names(&b));
    }

    #[test]
    fn clustering_objective_never_increases(seed in any::<u64>(), n in 1usize..60, k in 1usize..8) {
        let fps: Vec<Fingerprint> = (0..n).map(|i| fingerprint_of(seed.wrapping_add(i as u64))).collect();
        let a = cluster_tanimoto(&fps, k.min(n), seed).unwrap();
        prop_assert!(a.objective.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{:?}", a.objective);
        prop_assert_eq!(a.labels.len(), n);
        for (c, &m) in a.medoids.iter().enumerate() {
            prop_assert_eq!(a.labels[m], c);
        }
    }

    #[test]
    fn more_references_never_lower_similarity(seed in any::<u64>(), n in 1usize..20, r in 1usize..20, extra in 1usize..10) {
        let fps: Vec<Fingerprint> = (0..n).map(|i| fingerprint_of(seed ^ (i as u64 + 1))).collect();
        let mut reference: Vec<Fingerprint> = (0..r).map(|i| fingerprint_of(seed.wrapping_mul(31) ^ i as u64)).collect();
        let before = novelty(&fps, &reference).unwrap();
        reference.extend((0..extra).map(|i| fingerprint_of(seed.wrapping_mul(17) ^ (i as u64 + 99))));
        let after = novelty(&fps, &reference).unwrap();
        for (b, a) in before.iter().zip(&after) {
            prop_assert!((0.0..=1.0).contains(a));
            prop_assert!(a >= b);
        }
    }

    #[test]
    fn reactions_ignore_reactant_atom_order(t in 0usize..15, i in any::<prop::sample::Index>(), j in any::<prop::sample::Index>(), seed in any::<u64>()) {
        let s = space();
        let t = t % s.templates.len();
        let template = &s.templates[t];
        let (a, b) = (s.compatible_blocks(t, 0).unwrap(), s.compatible_blocks(t, 1).unwrap());
        let (ga, gb) = (&s.library.blocks()[*i.get(a)].graph, &s.library.blocks()[*j.get(b)].graph);
        let mut r = rng(seed);
        let (pa, pb) = (ga.permuted(&permutation(&mut r, ga.atom_count())), gb.permuted(&permutation(&mut r, gb.atom_count())));
        let set = |x: &fluorogen::molgraph::MolecularGraph, y: &fluorogen::molgraph::MolecularGraph| {
            apply_reaction(template, &[x, y]).unwrap().products.into_iter().map(|p| p.smiles).collect::<BTreeSet<_>>()
        };
        prop_assert_eq!(set(ga, gb), set(&pa, &pb));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn value_updates_never_raise_buffer_error(seed in any::<u64>(), n in 1usize..60) {
        use rand::Rng;
        let solvent = SolventFeatures::WATER;
        let mut r = rng(seed);
        let mut buffer = ReplayBuffer::new(100);
        for i in 0..n {
            let fp = fingerprint_of(seed ^ i as u64);
            let scores = [r.random(), r.random(), r.random(), r.random()];
            buffer.push(FeatureVector::from_parts(&fp, &solvent), scores);
        }
        let cfg = TrainConfig { hidden_dim: 8, epochs: 3, learning_rate: 0.05, momentum: 0.0, batch_size: 8, patience: 3, seed, ..TrainConfig::default() };
        let mut models = initial_value_models(&cfg, &solvent, seed);
        for _ in 0..2 {
            for (before, after) in train_value_models(&mut models, &buffer, &cfg).unwrap() {
                prop_assert!(after <= before);
            }
        }
    }

    #[test]
    fn training_is_deterministic(seed in 0u64..1000) {
        let text = std::fs::read_to_string(data("chemfluor_fixture.csv")).unwrap();
        let ing = ingest_chemfluor_str(&text, &ColumnMap::default()).unwrap();
        let d = curate_task(&ing.records, Task::AbsReg).unwrap();
        let cfg = TrainConfig { hidden_dim: 8, epochs: 5, seed, ..TrainConfig::default() };
        prop_assert_eq!(mlp_train(&d, &cfg).unwrap(), mlp_train(&d, &cfg).unwrap());
    }

    #[test]
    fn curation_ignores_row_order(seed in any::<u64>()) {
        let text = std::fs::read_to_string(data("chemfluor_fixture.csv")).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let header = lines.remove(0);
        let perm = permutation(&mut rng(seed), lines.len());
        let shuffled = std::iter::once(header).chain(perm.iter().map(|&i| lines[i])).collect::<Vec<_>>().join("\n");
        let (a, b) = (
            ingest_chemfluor_str(&text, &ColumnMap::default()).unwrap(),
            ingest_chemfluor_str(&shuffled, &ColumnMap::default()).unwrap(),
        );
        prop_assert_eq!(&a.records, &b.records);
        for task in Task::ALL {
            let (x, y) = (curate_task(&a.records, task).unwrap(), curate_task(&b.records, task).unwrap());
            prop_assert!(x.len() <= a.rows_read);
            prop_assert_eq!(x.to_tsv(), y.to_tsv());
        }
    }
}

#[test]
fn two_separated_groups_form_two_clusters() {
    let chains: Vec<String> = (3..13).map(|n| "C".repeat(n)).collect();
    let aromatics: Vec<String> = (1..11).map(|n| format!("c1ccc2ccccc2c1{}", "C".repeat(n))).collect();
    let fps: Vec<Fingerprint> =
        chains.iter().chain(&aromatics).map(|s| default_fingerprint(&parse_smiles(s).unwrap())).collect();
    let a = cluster_tanimoto(&fps, 2, 0).unwrap();
    assert!(a.labels[..10].iter().all(|&l| l == a.labels[0]), "{:?}", a.labels);
    assert!(a.labels[10..].iter().all(|&l| l == a.labels[10]), "{:?}", a.labels);
    assert_ne!(a.labels[0], a.labels[10]);
}
