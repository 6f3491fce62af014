use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use fluorogen::pipeline::{cmd_filter, cmd_generate, cmd_stats, cmd_train, PipelineError, RunConfig};

#[derive(Parser)]
#[command(name = "fluorogen", version, about = "Synthesis-constrained fluorophore generation")]
struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the default configuration and exit.
    #[arg(long)]
    print_config: bool,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output root; overrides `paths.output`.
    #[arg(long, global = true, env = "FLUOROGEN_OUTPUT_DIR")]
    output: Option<PathBuf>,
    /// Overrides the top-level `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-validate the property predictors and save checkpoints.
    Train,
    /// Run value-guided rollouts and a random baseline.
    Generate {
        /// Overrides `generate.n_rollouts`.
        #[arg(long)]
        rollouts: Option<usize>,
    },
    /// Property filters, clustering and novelty of generated molecules.
    Filter,
    /// Compare generated molecules with the baseline.
    Stats,
}

fn load_config(cli: &Cli) -> Result<RunConfig, PipelineError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.output {
        config.paths.output = dir.clone();
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
        config.apply_seed();
    }
    Ok(config)
}

fn run(cli: &Cli, command: &Command) -> Result<(), PipelineError> {
    let mut config = load_config(cli)?;
    match command {
        Command::Train => {
            let s = cmd_train(&config)?;
            print!("{}", s.report);
            for p in &s.checkpoints {
                log::info!("wrote {}", p.display());
            }
        }
        Command::Generate { rollouts } => {
            if let Some(n) = rollouts {
                config.generate.n_rollouts = *n;
            }
            let s = cmd_generate(&config)?;
            println!(
                "{} molecules, {} baseline, {} dead ends -> {}",
                s.molecules,
                s.baseline,
                s.dead_ends,
                s.output.display()
            );
        }
        Command::Filter => {
            let s = cmd_filter(&config)?;
            print!("{}", s.report);
            println!("clusters\t{}", s.clusters);
            if let Some(n) = s.novel {
                println!("novel\t{n}");
            }
        }
        Command::Stats => print!("{}", cmd_stats(&config)?.report),
    }
    Ok(())
}

fn main() -> anyhow::Result<ExitCode> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if cli.print_config {
        print!("{}", RunConfig::default().to_toml());
        return Ok(ExitCode::SUCCESS);
    }
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker pool")?;
    }
    let Some(command) = &cli.command else {
        eprintln!("no subcommand given; see --help");
        return Ok(ExitCode::from(2));
    };
    match run(&cli, command) {
        Ok(()) => Ok(ExitCode::SUCCESS),
        Err(e) => {
            eprintln!("error: {e}");
            Ok(ExitCode::from(e.exit_code() as u8))
        }
    }
}
