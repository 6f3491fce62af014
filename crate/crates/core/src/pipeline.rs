//! End-to-end commands behind the `fluorogen` binary: `train`, `generate`,
//! `filter` and `stats`, driven by one TOML configuration.

use std::error::Error as StdError;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{curate_task, ingest_chemfluor, water_solvent, ColumnMap, Task};
use crate::filters::{
    cluster_similarity_histogram, cluster_tanimoto, filter_scored, histogram_unit, is_novel, novelty, score_molecules,
    select_representatives, FilterReport, FilterThresholds,
};
use crate::fingerprint::{default_fingerprint, SolventFeatures};
use crate::generator::{generate, molecules_tsv, parse_molecules_tsv, sample_baseline, write_outputs, GenerationConfig, GeneratorError};
use crate::molgraph::parse_smiles;
use crate::reactions::{ingest_building_blocks, ingest_reactions, EntryIssue, ReactionSpace};
use crate::scorers::{cross_validate, load_checkpoint, save_checkpoint, ScorerError, ScorerSet, TrainConfig, CV_REPORT_HEADER};
use crate::stats::{compare, histogram, COMPARISON_HEADER};

type Source = Box<dyn StdError + Send + Sync>;

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad configuration or missing/invalid input files.
    #[error("{context}: {source}")]
    Input { context: String, source: Source },
    #[error("{context}: {source}")]
    Internal { context: String, source: Source },
}

impl PipelineError {
    fn input(context: impl Into<String>, source: impl Into<Source>) -> Self {
        PipelineError::Input { context: context.into(), source: source.into() }
    }

    fn internal(context: impl Into<String>, source: impl Into<Source>) -> Self {
        PipelineError::Internal { context: context.into(), source: source.into() }
    }

    /// 2 for input or configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Input { .. } => 2,
            PipelineError::Internal { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// ChemFluor-style CSV/TSV.
    pub dataset: PathBuf,
    /// `id<TAB>smiles` building blocks.
    pub blocks: PathBuf,
    /// TOML reaction templates.
    pub reactions: PathBuf,
    /// Directory holding `plqy.json`, `absorption.json`, `emission.json`.
    pub checkpoints: PathBuf,
    /// Root of all command outputs.
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            dataset: "data/chemfluor.csv".into(),
            blocks: "data/toy_blocks.tsv".into(),
            reactions: "data/toy_reactions.toml".into(),
            checkpoints: "fluorogen-out/checkpoints".into(),
            output: "fluorogen-out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub folds: usize,
    pub mlp: TrainConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection { folds: 10, mlp: TrainConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsSection {
    /// Random template/block combinations written to `baseline.tsv`.
    pub baseline_samples: usize,
    pub bins: usize,
}

impl Default for StatsSection {
    fn default() -> Self {
        StatsSection { baseline_samples: 2000, bins: 20 }
    }
}

/// Whole-run configuration. `seed` replaces the seeds of every section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub columns: ColumnMap,
    pub train: TrainSection,
    pub generate: GenerationConfig,
    pub filter: FilterThresholds,
    pub stats: StatsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            paths: Paths::default(),
            columns: ColumnMap::default(),
            train: TrainSection::default(),
            generate: GenerationConfig::default(),
            filter: FilterThresholds::default(),
            stats: StatsSection::default(),
        }
    }
}

impl RunConfig {
    /// Parses TOML; unknown keys are errors.
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let mut c: RunConfig = toml::from_str(text).map_err(|e| PipelineError::input("invalid configuration", e))?;
        c.apply_seed();
        Ok(c)
    }

    /// Reads a config file; relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::input(format!("cannot read config {}", path.display()), e))?;
        let mut c = RunConfig::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            c.paths.rebase(dir);
        }
        Ok(c)
    }

    pub fn apply_seed(&mut self) {
        self.train.mlp.seed = self.seed;
        self.generate.seed = self.seed;
        self.filter.seed = self.seed;
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

impl Paths {
    fn rebase(&mut self, dir: &Path) {
        for p in [&mut self.dataset, &mut self.blocks, &mut self.reactions, &mut self.checkpoints, &mut self.output] {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }

    pub fn generate_dir(&self) -> PathBuf {
        self.output.join("generate")
    }

    pub fn filter_dir(&self) -> PathBuf {
        self.output.join("filter")
    }

    pub fn stats_dir(&self) -> PathBuf {
        self.output.join("stats")
    }

    pub fn train_dir(&self) -> PathBuf {
        self.output.join("train")
    }
}

fn require_file(path: &Path, what: &str) -> Result<(), PipelineError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(PipelineError::input(format!("{what} not found"), format!("{}", path.display())))
    }
}

fn write(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::internal(format!("cannot create {}", dir.display()), e))?;
    }
    std::fs::write(path, text).map_err(|e| PipelineError::internal(format!("cannot write {}", path.display()), e))
}

fn scorer_error(context: &str, e: ScorerError) -> PipelineError {
    match e {
        ScorerError::Checkpoint { .. } | ScorerError::Dataset(_) | ScorerError::InvalidConfig(_) => {
            PipelineError::input(context, e)
        }
        other => PipelineError::internal(context, other),
    }
}

fn generator_error(context: &str, e: GeneratorError) -> PipelineError {
    match e {
        GeneratorError::InvalidConfig(_)
        | GeneratorError::NoUsableTemplate
        | GeneratorError::BadMoleculesFile { .. }
        | GeneratorError::BadRoute(_) => PipelineError::input(context, e),
        other => PipelineError::internal(context, other),
    }
}

fn issues_tsv(issues: &[EntryIssue]) -> String {
    let mut out = String::from("line\tentry\treason\n");
    for i in issues {
        let _ = writeln!(out, "{}\t{}\t{}", i.line, i.entry, i.reason);
    }
    out
}

pub fn checkpoint_path(dir: &Path, task: Task) -> PathBuf {
    dir.join(format!("{}.json", task.name()))
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    /// One CV report row per task.
    pub report: String,
    pub checkpoints: Vec<PathBuf>,
}

/// Cross-validates the three predictors and saves each task's best fold.
/// Writes `train/cv_metrics.tsv`, `train/rejections.tsv` and the
/// checkpoints.
pub fn cmd_train(config: &RunConfig) -> Result<TrainSummary, PipelineError> {
    let paths = &config.paths;
    require_file(&paths.dataset, "dataset")?;
    config.train.mlp.validate().map_err(|e| scorer_error("train.mlp", e))?;
    let ingested = ingest_chemfluor(&paths.dataset, &config.columns)
        .map_err(|e| PipelineError::input(format!("reading dataset {}", paths.dataset.display()), e))?;
    log::info!(
        "dataset: {} rows read, {} records, {} rejected",
        ingested.rows_read,
        ingested.records.len(),
        ingested.rejections.len()
    );
    write(&paths.train_dir().join("rejections.tsv"), &ingested.rejection_report())?;

    let mut report = format!("{CV_REPORT_HEADER}\n");
    let mut checkpoints = Vec::new();
    for task in Task::ALL {
        let data = curate_task(&ingested.records, task)
            .map_err(|e| PipelineError::input(format!("curating {task} data"), e))?;
        log::info!("{task}: {} examples, {}-fold CV", data.len(), config.train.folds);
        let cv = cross_validate(&data, config.train.folds, &config.train.mlp)
            .map_err(|e| scorer_error(&format!("cross-validating {task}"), e))?;
        let _ = writeln!(report, "{cv}");
        let path = checkpoint_path(&paths.checkpoints, task);
        std::fs::create_dir_all(&paths.checkpoints)
            .map_err(|e| PipelineError::internal(format!("cannot create {}", paths.checkpoints.display()), e))?;
        save_checkpoint(&cv.best_fold().model, &path).map_err(|e| scorer_error("saving checkpoint", e))?;
        checkpoints.push(path);
    }
    write(&paths.train_dir().join("cv_metrics.tsv"), &report)?;
    Ok(TrainSummary { report, checkpoints })
}

/// Loads the three task checkpoints from `dir`.
pub fn load_scorers(dir: &Path) -> Result<ScorerSet, PipelineError> {
    let load = |task| {
        let p = checkpoint_path(dir, task);
        require_file(&p, &format!("{task} checkpoint"))?;
        load_checkpoint(&p).map_err(|e| scorer_error("loading checkpoint", e))
    };
    Ok(ScorerSet::from_models(load(Task::PlqyClass)?, load(Task::AbsReg)?, load(Task::EmReg)?))
}

/// Loads blocks and templates; problems with single entries are logged
/// and written next to the outputs.
pub fn load_space(paths: &Paths, report_dir: &Path) -> Result<ReactionSpace, PipelineError> {
    require_file(&paths.blocks, "building blocks")?;
    require_file(&paths.reactions, "reaction templates")?;
    let (library, block_issues) =
        ingest_building_blocks(&paths.blocks).map_err(|e| PipelineError::input("reading building blocks", e))?;
    let (templates, template_issues) =
        ingest_reactions(&paths.reactions).map_err(|e| PipelineError::input("reading reaction templates", e))?;
    for i in block_issues.iter().chain(&template_issues) {
        log::warn!("skipped line {} ({}): {}", i.line, i.entry, i.reason);
    }
    let mut all = block_issues;
    all.extend(template_issues);
    write(&report_dir.join("input_issues.tsv"), &issues_tsv(&all))?;
    Ok(ReactionSpace::new(templates, library))
}

/// Solvent used for every prediction: water as recorded in the dataset
/// when it is available, else the built-in descriptors.
pub fn prediction_solvent(config: &RunConfig) -> SolventFeatures {
    if config.paths.dataset.is_file() {
        if let Ok(ing) = ingest_chemfluor(&config.paths.dataset, &config.columns) {
            if let Some(w) = water_solvent(&ing.records) {
                return w;
            }
        }
    }
    SolventFeatures::WATER
}

#[derive(Debug, Clone)]
pub struct GenerateSummary {
    pub molecules: usize,
    pub baseline: usize,
    pub dead_ends: usize,
    pub output: PathBuf,
}

/// Runs the generator and a random baseline. Writes `molecules.tsv`,
/// `run_log.tsv`, `reaction_usage.tsv`, `baseline.tsv` and
/// `generation_stats.tsv` under `generate/`.
pub fn cmd_generate(config: &RunConfig) -> Result<GenerateSummary, PipelineError> {
    let gen = &config.generate;
    gen.validate().map_err(|e| generator_error("generate", e))?;
    let scorers = load_scorers(&config.paths.checkpoints)?;
    let dir = config.paths.generate_dir();
    let space = load_space(&config.paths, &dir)?;
    let solvent = prediction_solvent(config);
    let run = generate(gen, &space, &scorers, &solvent).map_err(|e| generator_error("generation", e))?;
    write_outputs(&run, &dir).map_err(|e| generator_error("writing outputs", e))?;
    let baseline = sample_baseline(&space, &scorers, &solvent, config.stats.baseline_samples, gen.seed ^ 0xba5e, gen)
        .map_err(|e| generator_error("baseline sampling", e))?;
    write(&dir.join("baseline.tsv"), &molecules_tsv(&baseline))?;
    let s = &run.stats;
    let stats = format!(
        "rollouts\tmolecules\tduplicates\tdead_ends\tvalue_updates\tfinal_tau\tw_plqy\tw_abs\tw_em\tw_sp2\n{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
        s.rollouts,
        s.molecules,
        s.duplicates,
        s.dead_ends,
        s.value_updates,
        s.final_tau,
        s.final_weights[0],
        s.final_weights[1],
        s.final_weights[2],
        s.final_weights[3]
    );
    write(&dir.join("generation_stats.tsv"), &stats)?;
    Ok(GenerateSummary { molecules: run.molecules.len(), baseline: baseline.len(), dead_ends: s.dead_ends, output: dir })
}

fn read_molecule_smiles(path: &Path) -> Result<Vec<String>, PipelineError> {
    require_file(path, "molecules file")?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::input(format!("cannot read {}", path.display()), e))?;
    let mols = parse_molecules_tsv(&text).map_err(|e| generator_error(&format!("parsing {}", path.display()), e))?;
    Ok(mols.into_iter().map(|m| m.smiles).collect())
}

#[derive(Debug, Clone)]
pub struct FilterSummary {
    pub report: FilterReport,
    pub clusters: usize,
    pub novel: Option<usize>,
}

/// Filters `generate/molecules.tsv`, clusters the survivors and measures
/// novelty against the dataset when it is present. Outputs go to `filter/`.
pub fn cmd_filter(config: &RunConfig) -> Result<FilterSummary, PipelineError> {
    let t = &config.filter;
    let smiles = read_molecule_smiles(&config.paths.generate_dir().join("molecules.tsv"))?;
    let dir = config.paths.filter_dir();
    if smiles.is_empty() {
        log::warn!("no generated molecules; writing an empty report");
    }
    let scorers = load_scorers(&config.paths.checkpoints)?;
    let solvent = prediction_solvent(config);
    let scored = score_molecules(&smiles, &scorers, &solvent).map_err(|e| PipelineError::internal("scoring", e))?;
    let (survivors, report) = filter_scored(scored, t);
    write(&dir.join("filter_report.tsv"), &report.to_string())?;
    let mut out = String::from("smiles\tplqy_prob\tabs_nm\tem_nm\tsp2_size\n");
    for m in &survivors {
        let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", m.smiles, m.plqy_prob, m.absorption_nm, m.emission_nm, m.sp2);
    }
    write(&dir.join("survivors.tsv"), &out)?;

    let fps: Vec<_> = survivors.iter().map(|m| m.fingerprint.clone()).collect();
    let k = t.clusters.min(fps.len());
    let mut clusters_tsv = String::from("molecule\tsmiles\tcluster\tis_medoid\n");
    let mut reps_tsv = String::from("cluster\tmedoid\tsmiles\tranked_members\n");
    let mut hist_tsv = String::from("bin_start\tbin_end\tintra\tinter\n");
    if k > 0 {
        let a = cluster_tanimoto(&fps, k, t.seed).map_err(|e| PipelineError::internal("clustering", e))?;
        for (i, m) in survivors.iter().enumerate() {
            let _ = writeln!(clusters_tsv, "{i}\t{}\t{}\t{}", m.smiles, a.labels[i], u8::from(a.medoids[a.labels[i]] == i));
        }
        for r in select_representatives(&a, &fps) {
            let ranked: Vec<String> = r.ranked.iter().map(|i| i.to_string()).collect();
            let _ = writeln!(reps_tsv, "{}\t{}\t{}\t{}", r.cluster, r.medoid, survivors[r.medoid].smiles, ranked.join(","));
        }
        let (intra, inter) = cluster_similarity_histogram(&a, &fps);
        let bins = config.stats.bins.max(1);
        let (hi, hx) = (histogram_unit(&intra, bins), histogram_unit(&inter, bins));
        for b in 0..bins {
            let lo = b as f64 / bins as f64;
            let _ = writeln!(hist_tsv, "{lo}\t{}\t{}\t{}", (b + 1) as f64 / bins as f64, hi[b], hx[b]);
        }
    }
    write(&dir.join("clusters.tsv"), &clusters_tsv)?;
    write(&dir.join("representatives.tsv"), &reps_tsv)?;
    write(&dir.join("cluster_similarity_histogram.tsv"), &hist_tsv)?;

    let mut novel = None;
    if config.paths.dataset.is_file() && !fps.is_empty() {
        let ing = ingest_chemfluor(&config.paths.dataset, &config.columns)
            .map_err(|e| PipelineError::input("reading dataset for novelty", e))?;
        let mut reference_smiles: Vec<&str> = ing.records.iter().map(|r| r.smiles.as_str()).collect();
        reference_smiles.dedup();
        let reference: Vec<_> = reference_smiles
            .iter()
            .map(|s| default_fingerprint(&parse_smiles(s).expect("canonical SMILES re-parses")))
            .collect();
        let scores = novelty(&fps, &reference).map_err(|e| PipelineError::input("novelty", e))?;
        let mut nov = String::from("smiles\tmax_reference_similarity\tnovel\n");
        let mut count = 0;
        for (m, s) in survivors.iter().zip(&scores) {
            let flag = is_novel(*s, t.novelty_max);
            count += usize::from(flag);
            let _ = writeln!(nov, "{}\t{s}\t{}", m.smiles, u8::from(flag));
        }
        write(&dir.join("novelty.tsv"), &nov)?;
        novel = Some(count);
    }
    Ok(FilterSummary { report, clusters: k, novel })
}

#[derive(Debug, Clone)]
pub struct StatsSummary {
    pub report: String,
}

/// Re-scores `generate/molecules.tsv` and `generate/baseline.tsv` and
/// compares the four property distributions. Writes `stats/comparison.tsv`
/// and one histogram file per property.
pub fn cmd_stats(config: &RunConfig) -> Result<StatsSummary, PipelineError> {
    let gen_dir = config.paths.generate_dir();
    let generated = read_molecule_smiles(&gen_dir.join("molecules.tsv"))?;
    let baseline = read_molecule_smiles(&gen_dir.join("baseline.tsv"))?;
    if generated.is_empty() {
        log::warn!("no generated molecules; the comparison is empty");
    }
    let scorers = load_scorers(&config.paths.checkpoints)?;
    let solvent = prediction_solvent(config);
    let score = |s: &[String]| score_molecules(s, &scorers, &solvent).map_err(|e| PipelineError::internal("scoring", e));
    let (g, b) = (score(&generated)?, score(&baseline)?);
    let dir = config.paths.stats_dir();
    let bins = config.stats.bins.max(1);
    type Getter = fn(&crate::filters::ScoredMolecule) -> f64;
    let props: [(&str, Getter, f64, f64); 4] = [
        ("plqy_prob", |m| m.plqy_prob, 0.0, 1.0),
        ("sp2_size", |m| m.sp2 as f64, 0.0, 60.0),
        ("absorption_nm", |m| m.absorption_nm, 200.0, 1000.0),
        ("emission_nm", |m| m.emission_nm, 200.0, 1000.0),
    ];
    let mut report = format!("{COMPARISON_HEADER}\n");
    for (name, get, lo, hi) in props {
        let gv: Vec<f64> = g.iter().map(get).collect();
        let bv: Vec<f64> = b.iter().map(get).collect();
        let _ = writeln!(report, "{}", compare(name, &gv, &bv));
        let mut hist = String::from("bin_start\tbin_end\tgenerated\tbaseline\n");
        for ((s, e, cg), (_, _, cb)) in histogram(&gv, lo, hi, bins).into_iter().zip(histogram(&bv, lo, hi, bins)) {
            let _ = writeln!(hist, "{s}\t{e}\t{cg}\t{cb}");
        }
        write(&dir.join(format!("histogram_{name}.tsv")), &hist)?;
    }
    write(&dir.join("comparison.tsv"), &report)?;
    Ok(StatsSummary { report })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_unknown_keys_fail() {
        let c = RunConfig::default();
        let text = c.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
        let err = RunConfig::from_toml("[generate]\nn_rolouts = 5\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("n_rolouts"));
    }

    #[test]
    fn top_level_seed_reaches_sections() {
        let c = RunConfig::from_toml("seed = 9\n[generate]\nn_rollouts = 3\n").unwrap();
        assert_eq!(c.generate.n_rollouts, 3);
        assert_eq!((c.train.mlp.seed, c.generate.seed, c.filter.seed), (9, 9, 9));
    }

    #[test]
    fn missing_dataset_is_an_input_error() {
        let mut c = RunConfig::default();
        c.paths.dataset = "/nonexistent/chemfluor.csv".into();
        let err = cmd_train(&c).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("/nonexistent/chemfluor.csv"));
    }
}
