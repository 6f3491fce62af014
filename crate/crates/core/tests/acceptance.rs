//! Acceptance gate: one PASS/FAIL line per criterion. Criterion 4 needs the
//! public ChemFluor file named by `CHEMFLUOR_PATH` and is skipped without it.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fluorogen::dataset::{curate_task, ingest_chemfluor, ColumnMap, Task};
use fluorogen::filters::{filter_scored, FilterThresholds, ScoredMolecule};
use fluorogen::fingerprint::{build_feature_vector, default_fingerprint, tanimoto, FeatureVector, SolventFeatures};
use fluorogen::generator::{
    generate, replay_route, sample_baseline, sample_child, write_outputs, GenerationConfig, GenerationRun,
    GeneratedMolecule,
};
use fluorogen::molgraph::{parse_smiles, sp2_network_size, write_smiles_ordered, BondOrder, Hybridization, MolecularGraph};
use fluorogen::reactions::{
    ingest_building_blocks, ingest_reactions, match_pattern, BondQuery, PatternQuery, PrimKind, Primitive, QueryAtom,
    QueryBond, ReactionSpace,
};
use fluorogen::scorers::{cross_validate, Head, MlpModel, TrainConfig};
use fluorogen::stats::mann_whitney_greater;
use fluorogen::testkit::{permutation, proxy_records, proxy_train_config, random_graph, train_scorers};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn toy_space() -> ReactionSpace {
    let (library, issues) = ingest_building_blocks(&data("toy_blocks.tsv")).expect("toy blocks");
    assert!(issues.is_empty(), "{issues:?}");
    let (templates, issues) = ingest_reactions(&data("toy_reactions.toml")).expect("toy reactions");
    assert!(issues.is_empty(), "{issues:?}");
    ReactionSpace::new(templates, library)
}

// ---------------------------------------------------------------- 1

/// Union-find over atoms flagged SP2, joining SP2–SP2 bonds.
fn sp2_oracle(g: &MolecularGraph) -> usize {
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let sp2: Vec<bool> = g.atoms().iter().map(|a| a.hybridization == Hybridization::Sp2).collect();
    let mut parent: Vec<usize> = (0..sp2.len()).collect();
    for b in g.bonds() {
        if sp2[b.a] && sp2[b.b] {
            let (x, y) = (find(&mut parent, b.a), find(&mut parent, b.b));
            parent[x] = y;
        }
    }
    let mut size = vec![0; sp2.len()];
    for i in (0..sp2.len()).filter(|&i| sp2[i]) {
        let r = find(&mut parent, i);
        size[r] += 1;
    }
    size.into_iter().max().unwrap_or(0)
}

const NAMED_SP2: [(&str, &str, usize); 20] = [
    ("methane", "C", 0),
    ("benzene", "c1ccccc1", 6),
    ("naphthalene", "c1ccc2ccccc2c1", 10),
    ("ethylene", "C=C", 2),
    ("allene", "C=C=C", 1),
    ("anthracene", "c1ccc2cc3ccccc3cc2c1", 14),
    ("biphenyl", "c1ccc(-c2ccccc2)cc1", 12),
    ("toluene", "Cc1ccccc1", 6),
    ("butadiene", "C=CC=C", 4),
    ("acetic acid", "CC(=O)O", 2),
    ("benzaldehyde", "O=Cc1ccccc1", 8),
    ("acetylene", "C#C", 0),
    ("pyridine", "c1ccncc1", 6),
    ("stilbene", "c1ccc(C=Cc2ccccc2)cc1", 14),
    ("diphenylmethane", "c1ccc(Cc2ccccc2)cc1", 6),
    ("cyclohexane", "C1CCCCC1", 0),
    ("pyrrole", "c1cc[nH]c1", 5),
    ("benzonitrile", "N#Cc1ccccc1", 6),
    ("acetophenone", "CC(=O)c1ccccc1", 8),
    ("pyrene", "c1cc2ccc3cccc4ccc(c1)c2c34", 16),
];

fn criterion_1() -> Check {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..1000 {
        let g = random_graph(&mut rng, 24);
        let (got, want) = (sp2_network_size(&g), sp2_oracle(&g));
        ensure(got == want, || format!("random graph {i}: {got} vs oracle {want}"))?;
    }
    for (name, smiles, expected) in NAMED_SP2 {
        let g = parse_smiles(smiles).map_err(|e| format!("{name}: {e}"))?;
        let (got, oracle) = (sp2_network_size(&g), sp2_oracle(&g));
        ensure(got == expected && oracle == expected, || format!("{name}: got {got}, oracle {oracle}, expected {expected}"))?;
    }
    let elapsed = t0.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:.2?}"))?;
    Ok(format!("1000 random graphs + 20 named molecules agree with the oracle in {elapsed:.1?}"))
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Check {
    let space = toy_space();
    let blocks = space.library.blocks();
    let stride = blocks.len() / 100;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for b in blocks.iter().step_by(stride).take(100) {
        let reference = default_fingerprint(&b.graph);
        for _ in 0..10 {
            let ranks = permutation(&mut rng, b.graph.atom_count());
            let text = write_smiles_ordered(&b.graph, &ranks);
            let g = parse_smiles(&text).map_err(|e| format!("{text}: {e}"))?;
            ensure(default_fingerprint(&g) == reference, || format!("{} re-ordered as {text} changes bits", b.smiles))?;
        }
    }
    let fps: Vec<_> = (0..300).map(|_| default_fingerprint(&random_graph(&mut rng, 20))).collect();
    let d = |i: usize, j: usize| 1.0 - tanimoto(&fps[i], &fps[j]).expect("same length");
    for t in 0..1000 {
        let (a, b, c) = (rng.random_range(0..300), rng.random_range(0..300), rng.random_range(0..300));
        ensure(d(a, c) <= d(a, b) + d(b, c) + 1e-12, || format!("triple {t} ({a},{b},{c}) violates the triangle inequality"))?;
    }
    Ok("1000 reorderings bit-identical; 1000 triples satisfy the triangle inequality".into())
}

// ---------------------------------------------------------------- 3

fn gradient_check(head: Head, seed: u64) -> Result<f64, String> {
    let smiles = ["c1ccc2ccccc2c1", "CC(=O)Nc1ccccc1", "O=C(O)c1ccc(Br)cc1", "c1ccsc1", "CCN(CC)c1ccc(C=O)cc1"];
    let solvent = SolventFeatures::new(0.681, 0.997, 1.062, 0.025);
    let xs: Vec<FeatureVector> =
        smiles.iter().map(|s| build_feature_vector(&parse_smiles(s).unwrap(), &solvent)).collect();
    let ys: Vec<f64> = match head {
        Head::Sigmoid => vec![1.0, 0.0, 1.0, 0.0, 1.0],
        Head::Linear => vec![0.7, -0.3, 1.2, -1.0, 0.1],
    };
    let batch: Vec<(&FeatureVector, f64)> = xs.iter().zip(ys).collect();
    let hidden = 6;
    let model = MlpModel::random(xs[0].len(), hidden, head, 0.3, seed);

    // every hidden pre-activation must sit well away from the ReLU kink
    for x in &xs {
        for k in 0..hidden {
            let mut z = model.param(model.input_dim * hidden + k);
            for &(j, v) in x.nonzero() {
                z += v * model.param(j as usize * hidden + k);
            }
            ensure(z.abs() > 1e-3, || format!("pre-activation {z:e} too close to 0 for a finite-difference check"))?;
        }
    }

    let (_, grads) = model.loss_and_gradients(&batch);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for i in 0..model.parameter_count() {
        let analytic = grads.flat(i);
        let mut m = model.clone();
        let p = m.param(i);
        m.set_param(i, p + h);
        let up = m.loss(&batch);
        m.set_param(i, p - h);
        let down = m.loss(&batch);
        let numeric = (up - down) / (2.0 * h);
        let scale = analytic.abs().max(numeric.abs());
        if scale < 1e-7 {
            ensure((analytic - numeric).abs() < 1e-9, || format!("parameter {i}: {analytic:e} vs {numeric:e}"))?;
            continue;
        }
        checked += 1;
        worst = worst.max((analytic - numeric).abs() / scale);
    }
    ensure(checked > 50, || format!("only {checked} non-zero gradients checked"))?;
    Ok(worst)
}

fn criterion_3() -> Check {
    let sig = gradient_check(Head::Sigmoid, 3)?;
    let lin = gradient_check(Head::Linear, 4)?;
    ensure(sig < 1e-4 && lin < 1e-4, || format!("max relative error sigmoid {sig:e}, linear {lin:e}"))?;
    Ok(format!("max relative error sigmoid {sig:.1e}, linear {lin:.1e}"))
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let Some(path) = std::env::var_os("CHEMFLUOR_PATH").map(PathBuf::from) else {
        return Outcome::Skip("CHEMFLUOR_PATH not set".into());
    };
    let t0 = Instant::now();
    let run = || -> Check {
        let ing = ingest_chemfluor(&path, &ColumnMap::default()).map_err(|e| e.to_string())?;
        let config = TrainConfig::default();
        let mut summary = Vec::new();
        let mut ok = true;
        for (task, limit) in [(Task::PlqyClass, 0.85), (Task::AbsReg, 20.0), (Task::EmReg, 27.0)] {
            let d = curate_task(&ing.records, task).map_err(|e| e.to_string())?;
            let cv = cross_validate(&d, 10, &config).map_err(|e| e.to_string())?;
            let (mean, std) = cv.mean_std();
            ok &= if task == Task::PlqyClass { mean >= limit } else { mean <= limit };
            summary.push(format!("{task} {mean:.3} ± {std:.3}"));
        }
        let elapsed = t0.elapsed();
        ok &= elapsed < Duration::from_secs(3600);
        let text = format!("{} in {elapsed:.0?}", summary.join(", "));
        if ok {
            Ok(text)
        } else {
            Err(text)
        }
    };
    match run() {
        Ok(s) => Outcome::Pass(s),
        Err(s) => Outcome::Fail(s),
    }
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Check {
    let cases: [(&[f64], f64); 3] = [(&[1.0, 0.0], 1.0), (&[0.2, 0.5, -0.4, 0.1], 0.3), (&[2.0, 2.0, 0.0], 2.0)];
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut notes = Vec::new();
    for (values, tau) in cases {
        let e: Vec<f64> = values.iter().map(|v| (v / tau).exp()).collect();
        let z: f64 = e.iter().sum();
        let mut counts = vec![0usize; values.len()];
        for _ in 0..n {
            counts[sample_child(values, tau, &mut rng).map_err(|e| e.to_string())?] += 1;
        }
        for (i, c) in counts.iter().enumerate() {
            let p = e[i] / z;
            let freq = *c as f64 / n as f64;
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            ensure((freq - p).abs() <= 3.0 * sigma, || format!("V={values:?} τ={tau}: child {i} freq {freq} vs {p}"))?;
        }
        notes.push(format!("{:.4}", counts[0] as f64 / n as f64));
    }
    let derived = std::f64::consts::E / (1.0 + std::f64::consts::E);
    ensure((derived - 0.7311).abs() < 1e-4, || format!("e/(1+e) = {derived}"))?;
    Ok(format!("first-child frequencies {} (V=[1,0], τ=1 → {derived:.4})", notes.join(", ")))
}

// ---------------------------------------------------------------- 6–8

struct Toy {
    space: ReactionSpace,
    config: GenerationConfig,
    run: GenerationRun,
    baseline: Vec<GeneratedMolecule>,
    elapsed: Duration,
}

fn toy_run() -> Result<Toy, String> {
    let space = toy_space();
    let t0 = Instant::now();
    let records = proxy_records(&space, 1500, 1500, 11);
    let scorers = train_scorers(&records, &proxy_train_config(5)).map_err(|e| e.to_string())?;
    let config = GenerationConfig { n_rollouts: 2000, seed: 1, ..GenerationConfig::default() };
    let run = generate(&config, &space, &scorers, &SolventFeatures::WATER).map_err(|e| e.to_string())?;
    let baseline =
        sample_baseline(&space, &scorers, &SolventFeatures::WATER, 2000, 2, &config).map_err(|e| e.to_string())?;
    Ok(Toy { space, config, run, baseline, elapsed: t0.elapsed() })
}

fn criterion_6(toy: &Toy) -> Check {
    ensure(toy.space.library.len() >= 50 && toy.space.templates.len() >= 10, || "toy library too small".into())?;
    ensure(toy.baseline.len() == 2000, || format!("baseline has {} molecules", toy.baseline.len()))?;
    let mut notes = Vec::new();
    for (k, name) in [(0, "PLQY prob"), (3, "sp2 size")] {
        let g: Vec<f64> = toy.run.molecules.iter().map(|m| m.raw[k]).collect();
        let b: Vec<f64> = toy.baseline.iter().map(|m| m.raw[k]).collect();
        let (mg, mb) = (g.iter().sum::<f64>() / g.len() as f64, b.iter().sum::<f64>() / b.len() as f64);
        let test = mann_whitney_greater(&g, &b).ok_or("empty sample")?;
        ensure(mg > mb && test.p_greater < 0.01, || format!("{name}: {mg:.3} vs {mb:.3}, p = {:e}", test.p_greater))?;
        notes.push(format!("{name} {mg:.3} vs {mb:.3} (p = {:.1e})", test.p_greater));
    }
    ensure(toy.elapsed < Duration::from_secs(600), || format!("took {:.0?}", toy.elapsed))?;
    Ok(format!("{}; {} molecules in {:.1?}", notes.join(", "), toy.run.molecules.len(), toy.elapsed))
}

fn criterion_7(toy: &Toy) -> Check {
    let log = &toy.run.log;
    let target = toy.config.target_similarity;
    let tail = &log[log.len() / 2..];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for e in tail {
        let s = e.rolling_similarity.ok_or_else(|| format!("rollout {} has no rolling similarity", e.rollout))?;
        lo = lo.min(s);
        hi = hi.max(s);
    }
    ensure(lo >= target - 0.1 && hi <= target + 0.1, || format!("rolling similarity spans {lo:.3}..{hi:.3}"))?;
    for e in log {
        let sum: f64 = e.weights.iter().sum();
        ensure((sum - 1.0).abs() < 1e-9, || format!("rollout {}: weights sum to {sum}", e.rollout))?;
        ensure(e.weights.iter().all(|&w| w >= toy.config.weight_floor - 1e-12), || {
            format!("rollout {}: weights {:?} below the floor", e.rollout, e.weights)
        })?;
        let lowest = (0..4).min_by(|&a, &b| e.success_rates[a].total_cmp(&e.success_rates[b])).unwrap();
        let top = e.weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ensure(e.weights[lowest] >= top - 1e-12, || {
            format!("rollout {}: rates {:?} but weights {:?}", e.rollout, e.success_rates, e.weights)
        })?;
    }
    Ok(format!("final-half rolling similarity {lo:.3}..{hi:.3}; weights valid at all {} steps", log.len()))
}

fn criterion_8(toy: &Toy) -> Check {
    for m in &toy.run.molecules {
        let p = replay_route(&m.route, &toy.space).map_err(|e| e.to_string())?;
        ensure(p.smiles == m.smiles, || format!("route {} replays to {} not {}", m.route, p.smiles, m.smiles))?;
    }
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    write_outputs(&toy.run, &a).map_err(|e| e.to_string())?;
    let again = toy_run()?;
    write_outputs(&again.run, &b).map_err(|e| e.to_string())?;
    let names: BTreeSet<_> = std::fs::read_dir(&a).map_err(|e| e.to_string())?.map(|e| e.unwrap().file_name()).collect();
    ensure(names.len() == 3, || format!("expected 3 output files, found {names:?}"))?;
    for name in &names {
        let (x, y) = (std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap());
        ensure(x == y, || format!("{} differs between runs", name.to_string_lossy()))?;
    }
    ensure(again.baseline == toy.baseline, || "baseline differs between runs".into())?;
    Ok(format!("{} routes replay exactly; {} output files byte-identical", toy.run.molecules.len(), names.len()))
}

// ---------------------------------------------------------------- 9

fn scored(sp2: usize, plqy: f64, abs: f64, em: f64) -> ScoredMolecule {
    ScoredMolecule {
        smiles: format!("sp2={sp2} plqy={plqy} abs={abs} em={em}"),
        fingerprint: default_fingerprint(&parse_smiles("C").unwrap()),
        plqy_prob: plqy,
        absorption_nm: abs,
        emission_nm: em,
        sp2,
    }
}

fn criterion_9() -> Check {
    let t = FilterThresholds::default();
    let cases = [
        (scored(11, 0.9, 500.0, 550.0), false, "sp2 = 11"),
        (scored(12, 0.9, 500.0, 550.0), true, "sp2 = 12"),
        (scored(12, 0.5, 500.0, 550.0), true, "PLQY prob 0.5"),
        (scored(12, 0.4999, 500.0, 550.0), false, "PLQY prob 0.4999"),
        (scored(12, 0.9, 419.0, 550.0), false, "absorption 419"),
        (scored(12, 0.9, 420.0, 550.0), true, "absorption 420"),
        (scored(12, 0.9, 500.0, 419.0), false, "emission 419"),
        (scored(12, 0.9, 500.0, 420.0), true, "emission 420"),
        (scored(12, 0.9, 750.0, 750.0), true, "wavelengths 750"),
        (scored(12, 0.9, 751.0, 550.0), false, "absorption 751"),
    ];
    for (m, keep, label) in &cases {
        let (out, _) = filter_scored(vec![m.clone()], &t);
        ensure(out.len() == usize::from(*keep), || format!("{label}: kept = {}", !out.is_empty()))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..200 {
        let ms: Vec<ScoredMolecule> = (0..rng.random_range(0..60))
            .map(|_| {
                scored(
                    rng.random_range(0..25),
                    rng.random(),
                    rng.random_range(300.0..800.0),
                    rng.random_range(300.0..800.0),
                )
            })
            .collect();
        let (_, report) = filter_scored(ms, &t);
        let mut prev = report.input;
        for s in &report.stages {
            ensure(s.remaining <= prev && s.remaining + s.rejected == prev, || format!("trial {trial}: {report}"))?;
            prev = s.remaining;
        }
    }
    Ok(format!("{} boundary cases exact; stage counts monotone on 200 random sets", cases.len()))
}

// ---------------------------------------------------------------- 10

/// Atom-level predicate evaluated from the graph's raw fields.
fn prim_holds(p: &Primitive, g: &MolecularGraph, i: usize) -> bool {
    let a = &g.atoms()[i];
    let in_ring = g.neighbors(i).iter().any(|&(j, b)| {
        // the bond (i, j) lies on a cycle when j is still reachable without it
        let mut seen = vec![false; g.atom_count()];
        let mut stack = vec![i];
        seen[i] = true;
        while let Some(u) = stack.pop() {
            for &(v, bb) in g.neighbors(u) {
                if bb != b && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen[j]
    });
    let hit = match p.kind {
        PrimKind::Element { element, aromatic } => a.element == element && a.aromatic == aromatic,
        PrimKind::AtomicNumber(e) => a.element == e,
        PrimKind::Aromatic => a.aromatic,
        PrimKind::Aliphatic => !a.aromatic,
        PrimKind::Any => true,
        PrimKind::Degree(d) => g.neighbors(i).len() == d as usize,
        PrimKind::HCount(h) => g.total_h(i) == h,
        PrimKind::Ring => in_ring,
        PrimKind::Charge(c) => a.formal_charge == c,
    };
    hit != p.negated
}

fn atom_holds(q: &QueryAtom, g: &MolecularGraph, i: usize) -> bool {
    q.clauses.iter().all(|c| c.iter().any(|alt| alt.iter().all(|p| prim_holds(p, g, i))))
}

fn bond_holds(q: BondQuery, order: BondOrder) -> bool {
    match q {
        BondQuery::Any => true,
        BondQuery::Single => order == BondOrder::Single,
        BondQuery::Double => order == BondOrder::Double,
        BondQuery::Triple => order == BondOrder::Triple,
        BondQuery::Aromatic => order == BondOrder::Aromatic,
        BondQuery::SingleOrAromatic => order == BondOrder::Single || order == BondOrder::Aromatic,
    }
}

/// Every injective assignment, checked exhaustively.
fn brute_force(q: &PatternQuery, g: &MolecularGraph) -> BTreeSet<Vec<usize>> {
    fn rec(q: &PatternQuery, g: &MolecularGraph, cur: &mut Vec<usize>, out: &mut BTreeSet<Vec<usize>>) {
        if cur.len() == q.atom_count() {
            let ok = q.atoms().iter().enumerate().all(|(k, qa)| atom_holds(qa, g, cur[k]))
                && q.bonds().iter().all(|qb| {
                    g.bonds()
                        .iter()
                        .find(|b| (b.a == cur[qb.a] && b.b == cur[qb.b]) || (b.a == cur[qb.b] && b.b == cur[qb.a]))
                        .is_some_and(|b| bond_holds(qb.order, b.order))
                });
            if ok {
                out.insert(cur.clone());
            }
            return;
        }
        for v in 0..g.atom_count() {
            if !cur.contains(&v) {
                cur.push(v);
                rec(q, g, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = BTreeSet::new();
    rec(q, g, &mut Vec::new(), &mut out);
    out
}

fn random_primitive(rng: &mut ChaCha8Rng) -> Primitive {
    use fluorogen::molgraph::Element;
    const ELEMENTS: [Element; 4] = [Element::C, Element::N, Element::O, Element::S];
    let kind = match rng.random_range(0..9) {
        0 => PrimKind::Element { element: ELEMENTS[rng.random_range(0..4)], aromatic: rng.random_bool(0.4) },
        1 => PrimKind::AtomicNumber(ELEMENTS[rng.random_range(0..4)]),
        2 => PrimKind::Aromatic,
        3 => PrimKind::Aliphatic,
        4 => PrimKind::Any,
        5 => PrimKind::Degree(rng.random_range(0..4)),
        6 => PrimKind::HCount(rng.random_range(0..4)),
        7 => PrimKind::Ring,
        _ => PrimKind::Charge(0),
    };
    Primitive { negated: rng.random_bool(0.2), kind }
}

fn random_bond_query(rng: &mut ChaCha8Rng) -> BondQuery {
    [BondQuery::Single, BondQuery::Double, BondQuery::Triple, BondQuery::Aromatic, BondQuery::Any, BondQuery::SingleOrAromatic]
        [rng.random_range(0..6)]
}

/// Half the queries are random predicates on a random tree (plus an
/// occasional ring bond); the rest copy a connected piece of `g` so that
/// matches exist.
fn random_query(rng: &mut ChaCha8Rng, g: &MolecularGraph) -> PatternQuery {
    if rng.random_bool(0.5) {
        let n = rng.random_range(1..=5);
        let atoms: Vec<QueryAtom> = (0..n)
            .map(|_| {
                let clauses = (0..rng.random_range(1..=2))
                    .map(|_| {
                        (0..rng.random_range(1..=2))
                            .map(|_| (0..rng.random_range(1..=2)).map(|_| random_primitive(rng)).collect())
                            .collect()
                    })
                    .collect();
                QueryAtom { clauses, map: None }
            })
            .collect();
        let mut bonds: Vec<QueryBond> =
            (1..n).map(|i| QueryBond { a: rng.random_range(0..i), b: i, order: random_bond_query(rng) }).collect();
        if n >= 3 && rng.random_bool(0.3) {
            let (a, b) = (0, n - 1);
            if !bonds.iter().any(|x| (x.a == a && x.b == b) || (x.a == b && x.b == a)) {
                bonds.push(QueryBond { a, b, order: random_bond_query(rng) });
            }
        }
        return PatternQuery::new(atoms, bonds).expect("connected query");
    }
    let start = rng.random_range(0..g.atom_count());
    let size = rng.random_range(1..=4);
    let mut picked = vec![start];
    while picked.len() < size {
        let frontier: Vec<usize> = picked
            .iter()
            .flat_map(|&u| g.neighbors(u).iter().map(|&(v, _)| v))
            .filter(|v| !picked.contains(v))
            .collect();
        if frontier.is_empty() {
            break;
        }
        picked.push(frontier[rng.random_range(0..frontier.len())]);
    }
    let atoms = picked
        .iter()
        .map(|&i| {
            let a = &g.atoms()[i];
            let kind = if rng.random_bool(0.8) {
                PrimKind::Element { element: a.element, aromatic: a.aromatic }
            } else {
                PrimKind::AtomicNumber(a.element)
            };
            QueryAtom::from_primitive(Primitive::new(kind))
        })
        .collect();
    let mut bonds = Vec::new();
    for (x, &i) in picked.iter().enumerate() {
        for (y, &j) in picked.iter().enumerate().skip(x + 1) {
            if let Some(b) = g.bond_between(i, j) {
                let order = if rng.random_bool(0.8) {
                    match b.order {
                        BondOrder::Single => BondQuery::Single,
                        BondOrder::Double => BondQuery::Double,
                        BondOrder::Triple => BondQuery::Triple,
                        BondOrder::Aromatic => BondQuery::Aromatic,
                    }
                } else {
                    BondQuery::Any
                };
                bonds.push(QueryBond { a: x, b: y, order });
            }
        }
    }
    PatternQuery::new(atoms, bonds).expect("picked atoms are connected")
}

fn criterion_10() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut with_matches = 0;
    for pair in 0..500 {
        let g = random_graph(&mut rng, 8);
        let q = random_query(&mut rng, &g);
        let got: BTreeSet<Vec<usize>> = match_pattern(&q, &g).into_iter().collect();
        let want = brute_force(&q, &g);
        ensure(got == want, || format!("pair {pair}: matcher {} vs oracle {} embeddings", got.len(), want.len()))?;
        with_matches += usize::from(!want.is_empty());
    }
    ensure(with_matches >= 100, || format!("only {with_matches} pairs have any match"))?;
    Ok(format!("500 pairs identical ({with_matches} with at least one embedding)"))
}

// ----------------------------------------------------------------

fn outcome(c: Check) -> Outcome {
    match c {
        Ok(s) => Outcome::Pass(s),
        Err(s) => Outcome::Fail(s),
    }
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters pass arguments; this target always
    // runs every criterion.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "sp2 oracle equivalence", outcome(criterion_1())),
        (2, "fingerprint invariance", outcome(criterion_2())),
        (3, "MLP gradient check", outcome(criterion_3())),
        (4, "ChemFluor predictor reproduction", criterion_4()),
        (5, "softmax sampling", outcome(criterion_5())),
    ];
    match toy_run() {
        Ok(toy) => {
            results.push((6, "generation enrichment", outcome(criterion_6(&toy))));
            results.push((7, "dynamic tuning", outcome(criterion_7(&toy))));
            results.push((8, "determinism and route replay", outcome(criterion_8(&toy))));
        }
        Err(e) => {
            for (n, name) in [(6, "generation enrichment"), (7, "dynamic tuning"), (8, "determinism and route replay")] {
                results.push((n, name, Outcome::Fail(format!("toy run failed: {e}"))));
            }
        }
    }
    results.push((9, "filter pipeline contract", outcome(criterion_9())));
    results.push((10, "matcher oracle", outcome(criterion_10())));

    let mut failed = 0;
    for (n, name, o) in &results {
        let (tag, detail) = match o {
            Outcome::Pass(s) => ("PASS", s),
            Outcome::Fail(s) => {
                failed += 1;
                ("FAIL", s)
            }
            Outcome::Skip(s) => ("SKIP", s),
        };
        println!("{tag} criterion {n:>2} ({name}): {detail}");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
