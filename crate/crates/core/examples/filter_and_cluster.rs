//! Property filters, k-medoids clustering and novelty on random toy
//! products scored by proxy-trained predictors.

use std::path::Path;

use anyhow::Result;
use fluorogen::filters::{cluster_tanimoto, novelty, run_filters, select_representatives, FilterThresholds};
use fluorogen::fingerprint::SolventFeatures;
use fluorogen::reactions::{ingest_building_blocks, ingest_reactions, ReactionSpace};
use fluorogen::testkit::{proxy_records, random_products, train_scorers};
use fluorogen::scorers::TrainConfig;

fn main() -> Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let (library, _) = ingest_building_blocks(&data.join("toy_blocks.tsv"))?;
    let (templates, _) = ingest_reactions(&data.join("toy_reactions.toml"))?;
    let space = ReactionSpace::new(templates, library);
    let records = proxy_records(&space, 400, 400, 1);
    let scorers = train_scorers(&records, &TrainConfig { hidden_dim: 32, epochs: 15, ..TrainConfig::default() })?;

    let smiles: Vec<String> = random_products(&space, 600, 2, 99).into_iter().map(|p| p.smiles).collect();
    let thresholds = FilterThresholds { clusters: 10, ..FilterThresholds::default() };
    let (survivors, report) = run_filters(&smiles, &scorers, &SolventFeatures::WATER, &thresholds)?;
    print!("{report}");
    if survivors.is_empty() {
        return Ok(());
    }

    let fps: Vec<_> = survivors.iter().map(|m| m.fingerprint.clone()).collect();
    let k = thresholds.clusters.min(fps.len());
    let clusters = cluster_tanimoto(&fps, k, thresholds.seed)?;
    println!("\nk = {k}, objective by iteration {:.2?}", clusters.objective);
    for r in select_representatives(&clusters, &fps) {
        println!("cluster {:>2} ({:>3} members): {}", r.cluster, r.ranked.len(), survivors[r.medoid].smiles);
    }

    let reference: Vec<_> = space.library.blocks().iter().map(|b| fluorogen::fingerprint::default_fingerprint(&b.graph)).collect();
    let scores = novelty(&fps, &reference)?;
    let novel = scores.iter().filter(|&&s| s < thresholds.novelty_max).count();
    println!("\n{novel} of {} survivors have nearest block similarity < {}", fps.len(), thresholds.novelty_max);
    Ok(())
}
