//! Tab-separated output files of a generation run.

use std::fmt::Write as _;
use std::path::Path;

use super::{GeneratedMolecule, GenerationRun, GeneratorError, RolloutLog, Route, PROPERTIES};

pub const MOLECULES_HEADER: &str =
    "smiles\troute\tm_plqy\tm_abs\tm_em\tm_sp2\tp\trollout\tplqy_prob\tabs_nm\tem_nm\tsp2_size";

pub const RUN_LOG_HEADER: &str = "rollout\tstatus\ttau\tw_plqy\tw_abs\tw_em\tw_sp2\tr_plqy\tr_abs\tr_em\tr_sp2\tsimilarity\trolling_similarity";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Floats use the shortest representation that parses back exactly.
pub fn molecules_tsv(molecules: &[GeneratedMolecule]) -> String {
    let mut out = String::from(MOLECULES_HEADER);
    out.push('\n');
    for m in molecules {
        let _ = write!(out, "{}\t{}", m.smiles, m.route);
        for s in m.scores {
            let _ = write!(out, "\t{s}");
        }
        let _ = write!(out, "\t{}\t{}", m.p, m.rollout);
        for r in m.raw {
            let _ = write!(out, "\t{r}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_molecules_tsv(text: &str) -> Result<Vec<GeneratedMolecule>, GeneratorError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (i == 0 && line.starts_with("smiles\t")) {
            continue;
        }
        let bad = |reason: String| GeneratorError::BadMoleculesFile { line: i + 1, reason };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 12 {
            return Err(bad(format!("expected 12 fields, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("`{s}` is not a number")));
        let mut scores = [0.0; PROPERTIES];
        let mut raw = [0.0; PROPERTIES];
        for k in 0..PROPERTIES {
            scores[k] = num(f[2 + k])?;
            raw[k] = num(f[8 + k])?;
        }
        out.push(GeneratedMolecule {
            smiles: f[0].to_string(),
            route: f[1].parse::<Route>()?,
            scores,
            p: num(f[6])?,
            rollout: f[7].parse().map_err(|_| bad(format!("`{}` is not a rollout index", f[7])))?,
            raw,
        });
    }
    Ok(out)
}

pub fn run_log_tsv(log: &[RolloutLog]) -> String {
    let mut out = String::from(RUN_LOG_HEADER);
    out.push('\n');
    for e in log {
        let _ = write!(out, "{}\t{}\t{}", e.rollout, e.status.as_str(), e.tau);
        for w in e.weights.iter().chain(&e.success_rates) {
            let _ = write!(out, "\t{w}");
        }
        let _ = writeln!(out, "\t{}\t{}", opt(e.similarity), opt(e.rolling_similarity));
    }
    out
}

pub fn usage_tsv(run: &GenerationRun) -> String {
    let mut out = String::from("template\tcount\n");
    for (t, n) in &run.usage {
        let _ = writeln!(out, "{t}\t{n}");
    }
    out
}

/// Writes `molecules.tsv`, `run_log.tsv` and `reaction_usage.tsv` into `dir`.
pub fn write_outputs(run: &GenerationRun, dir: &Path) -> Result<(), GeneratorError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| GeneratorError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    for (name, text) in [
        ("molecules.tsv", molecules_tsv(&run.molecules)),
        ("run_log.tsv", run_log_tsv(&run.log)),
        ("reaction_usage.tsv", usage_tsv(run)),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(io(&path))?;
    }
    Ok(())
}
