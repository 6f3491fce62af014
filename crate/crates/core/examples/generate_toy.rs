//! Trains proxy scorers on the toy library, runs value-guided generation
//! and compares it with uniformly random combinations.

use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use fluorogen::fingerprint::SolventFeatures;
use fluorogen::generator::{generate, sample_baseline, GenerationConfig};
use fluorogen::reactions::{ingest_building_blocks, ingest_reactions, ReactionSpace};
use fluorogen::testkit::{proxy_records, proxy_train_config, train_scorers};

fn main() -> Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let (library, _) = ingest_building_blocks(&data.join("toy_blocks.tsv"))?;
    let (templates, _) = ingest_reactions(&data.join("toy_reactions.toml"))?;
    let space = ReactionSpace::new(templates, library);

    let t0 = Instant::now();
    let records = proxy_records(&space, 1500, 1500, 11);
    let scorers = train_scorers(&records, &proxy_train_config(5))?;
    println!("trained scorers on {} proxy records in {:.1?}", records.len(), t0.elapsed());

    let n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(2000);
    let config = GenerationConfig { n_rollouts: n, seed: 1, ..Default::default() };
    let t0 = Instant::now();
    let run = generate(&config, &space, &scorers, &SolventFeatures::WATER)?;
    println!("{n} rollouts in {:.1?}: {:?}", t0.elapsed(), run.stats);

    let baseline = sample_baseline(&space, &scorers, &SolventFeatures::WATER, n, 2, &config)?;
    let mean = |xs: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = xs.collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    for (k, name) in ["PLQY prob", "abs nm", "em nm", "sp2 size"].iter().enumerate() {
        println!(
            "{name:>10}: generated {:.3}  random {:.3}",
            mean(&mut run.molecules.iter().map(|m| m.raw[k])),
            mean(&mut baseline.iter().map(|m| m.raw[k]))
        );
    }
    let tail = &run.log[n / 2..];
    let rolling: Vec<f64> = tail.iter().filter_map(|e| e.rolling_similarity).collect();
    let lo = rolling.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rolling.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!("rolling similarity over the second half: {lo:.3}..{hi:.3}");
    for e in run.log.iter().step_by((n / 20).max(1)) {
        println!(
            "{:>5} tau {:.4} w {:.2?} r {:.2?} sim {:.3}",
            e.rollout,
            e.tau,
            e.weights,
            e.success_rates,
            e.rolling_similarity.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
