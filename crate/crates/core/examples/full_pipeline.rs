//! Runs train, generate, filter and stats on the bundled fixture, the same
//! steps as the `fluorogen` binary, writing into a temporary directory.

use std::path::PathBuf;

use anyhow::Result;
use fluorogen::pipeline::{cmd_filter, cmd_generate, cmd_stats, cmd_train, RunConfig};

fn main() -> Result<()> {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let out = std::env::temp_dir().join("fluorogen-full-pipeline");
    let mut config = RunConfig { seed: 7, ..RunConfig::default() };
    config.paths.dataset = data.join("chemfluor_fixture.csv");
    config.paths.blocks = data.join("toy_blocks.tsv");
    config.paths.reactions = data.join("toy_reactions.toml");
    config.paths.checkpoints = out.join("checkpoints");
    config.paths.output = out.clone();
    config.train.folds = 5;
    config.train.mlp.hidden_dim = 32;
    config.train.mlp.epochs = 30;
    config.generate.n_rollouts = 300;
    config.filter.clusters = 10;
    config.stats.baseline_samples = 300;
    config.apply_seed();

    print!("{}", cmd_train(&config)?.report);
    let g = cmd_generate(&config)?;
    println!("\n{} molecules ({} dead ends), {} baseline", g.molecules, g.dead_ends, g.baseline);
    let f = cmd_filter(&config)?;
    print!("\n{}", f.report);
    println!("{} clusters, {:?} novel", f.clusters, f.novel);
    print!("\n{}", cmd_stats(&config)?.report);
    println!("\noutputs in {}", out.display());
    Ok(())
}
