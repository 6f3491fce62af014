//! ChemFluor ingestion, per-task curation and cross-validation splits.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::{build_feature_vector, FeatureVector, SolventFeatures};
use crate::molgraph::{parse_smiles, write_canonical_smiles};

/// PLQY strictly above this value is labelled fluorescent.
pub const PLQY_POSITIVE_ABOVE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed delimited text: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing mandatory column `{0}`")]
    MissingColumn(String),
    #[error("no valid rows")]
    NoValidRows,
    #[error("no examples for task {0}")]
    EmptyTask(Task),
    #[error("{n} examples cannot be split into {folds} folds")]
    TooSmall { n: usize, folds: usize },
}

/// Header names for each field. Matching ignores case and non-alphanumeric
/// characters, and falls back to a unique prefix match, so `Absorption/nm`
/// resolves to `Absorption`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColumnMap {
    pub smiles: String,
    pub sp: String,
    pub sdp: String,
    pub sa: String,
    pub sb: String,
    pub plqy: String,
    pub absorption: String,
    pub emission: String,
    /// Optional solvent name or SMILES column; used only to locate water.
    pub solvent: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            smiles: "SMILES".into(),
            sp: "SP".into(),
            sdp: "SdP".into(),
            sa: "SA".into(),
            sb: "SB".into(),
            plqy: "PLQY".into(),
            absorption: "Absorption".into(),
            emission: "Emission".into(),
            solvent: "Solvent".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChemFluorRecord {
    /// Canonical SMILES.
    pub smiles: String,
    pub solvent: Option<SolventFeatures>,
    pub solvent_name: Option<String>,
    pub plqy: Option<f64>,
    pub absorption_nm: Option<f64>,
    pub emission_nm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    /// 1-based line number in the input file (header is line 1).
    pub line: usize,
    pub smiles: String,
    pub reason: String,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}\t{}\t{}", self.line, self.smiles, self.reason)
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    /// Deduplicated records sorted by (canonical SMILES, solvent).
    pub records: Vec<ChemFluorRecord>,
    pub rejections: Vec<Rejection>,
    pub rows_read: usize,
}

impl Ingested {
    pub fn rejection_report(&self) -> String {
        let mut out = String::from("line\tsmiles\treason\n");
        for r in &self.rejections {
            out.push_str(&format!("{}\t{}\t{}\n", r.line, r.smiles, r.reason));
        }
        out
    }
}

fn normalize_header(h: &str) -> String {
    h.chars().filter(|c| c.is_ascii_alphanumeric()).flat_map(|c| c.to_lowercase()).collect()
}

fn find_column(headers: &[String], wanted: &str) -> Option<usize> {
    let w = normalize_header(wanted);
    if let Some(i) = headers.iter().position(|h| *h == w) {
        return Some(i);
    }
    let prefixed: Vec<usize> = (0..headers.len()).filter(|&i| headers[i].starts_with(&w)).collect();
    (prefixed.len() == 1).then(|| prefixed[0])
}

fn parse_optional(field: Option<&str>) -> Result<Option<f64>, String> {
    let Some(raw) = field.map(str::trim) else { return Ok(None) };
    if raw.is_empty() || ["nan", "na", "n/a", "-", "none"].contains(&raw.to_ascii_lowercase().as_str()) {
        return Ok(None);
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        Ok(_) => Ok(None),
        Err(_) => Err(format!("not a number: {raw:?}")),
    }
}

fn sniff_delimiter(text: &str) -> u8 {
    let header = text.lines().next().unwrap_or("");
    if header.matches('\t').count() > header.matches(',').count() {
        b'\t'
    } else {
        b','
    }
}

pub fn ingest_chemfluor(path: &Path, columns: &ColumnMap) -> Result<Ingested, DatasetError> {
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    ingest_chemfluor_str(&text, columns)
}

struct Sums {
    solvent: Option<SolventFeatures>,
    solvent_name: Option<String>,
    plqy: Vec<f64>,
    abs: Vec<f64>,
    em: Vec<f64>,
}

/// Order-independent mean: values are summed in sorted order.
fn mean(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

pub fn ingest_chemfluor_str(text: &str, columns: &ColumnMap) -> Result<Ingested, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(sniff_delimiter(text))
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(normalize_header).collect();
    let required = |name: &str| find_column(&headers, name).ok_or_else(|| DatasetError::MissingColumn(name.to_string()));
    let smiles_col = required(&columns.smiles)?;
    let solvent_cols = [
        find_column(&headers, &columns.sp),
        find_column(&headers, &columns.sdp),
        find_column(&headers, &columns.sa),
        find_column(&headers, &columns.sb),
    ];
    let plqy_col = find_column(&headers, &columns.plqy);
    let abs_col = find_column(&headers, &columns.absorption);
    let em_col = find_column(&headers, &columns.emission);
    if plqy_col.is_none() && abs_col.is_none() && em_col.is_none() {
        return Err(DatasetError::MissingColumn(format!(
            "{} / {} / {}",
            columns.plqy, columns.absorption, columns.emission
        )));
    }
    let name_col = find_column(&headers, &columns.solvent);

    let mut groups: BTreeMap<(String, Option<[u64; 4]>), Sums> = BTreeMap::new();
    let mut rejections = Vec::new();
    let mut rows_read = 0;
    for (row, result) in reader.records().enumerate() {
        let line = row + 2;
        rows_read += 1;
        let rec = match result {
            Ok(r) => r,
            Err(e) => {
                rejections.push(Rejection { line, smiles: String::new(), reason: e.to_string() });
                continue;
            }
        };
        let raw_smiles = rec.get(smiles_col).unwrap_or("").trim().to_string();
        let reject = |reason: String, rejections: &mut Vec<Rejection>| {
            rejections.push(Rejection { line, smiles: raw_smiles.clone(), reason });
        };
        let graph = match parse_smiles(&raw_smiles) {
            Ok(g) => g,
            Err(e) => {
                reject(format!("invalid SMILES: {e}"), &mut rejections);
                continue;
            }
        };
        let get = |col: Option<usize>| parse_optional(col.and_then(|c| rec.get(c)));
        let parsed = (|| -> Result<_, String> {
            let mut solvent = [0.0; 4];
            let mut complete = true;
            for (k, col) in solvent_cols.iter().enumerate() {
                match get(*col)? {
                    Some(v) => solvent[k] = v,
                    None => complete = false,
                }
            }
            let plqy = get(plqy_col)?;
            let abs = get(abs_col)?;
            let em = get(em_col)?;
            if let Some(p) = plqy {
                if !(0.0..=1.0).contains(&p) {
                    return Err(format!("PLQY {p} outside [0, 1]"));
                }
            }
            for w in [abs, em].into_iter().flatten() {
                if w <= 0.0 {
                    return Err(format!("non-positive wavelength {w}"));
                }
            }
            if plqy.is_none() && abs.is_none() && em.is_none() {
                return Err("no measurement".into());
            }
            let solvent = complete.then(|| SolventFeatures::new(solvent[0], solvent[1], solvent[2], solvent[3]));
            Ok((solvent, plqy, abs, em))
        })();
        let (solvent, plqy, abs, em) = match parsed {
            Ok(v) => v,
            Err(reason) => {
                reject(reason, &mut rejections);
                continue;
            }
        };
        let canonical = write_canonical_smiles(&graph);
        let entry = groups.entry((canonical, solvent.map(|s| s.key()))).or_insert_with(|| Sums {
            solvent,
            solvent_name: None,
            plqy: Vec::new(),
            abs: Vec::new(),
            em: Vec::new(),
        });
        if let Some(name) = name_col.and_then(|c| rec.get(c)).map(str::trim).filter(|s| !s.is_empty()) {
            // keep the smallest name so the choice is independent of row order
            if entry.solvent_name.as_deref().is_none_or(|cur| name < cur) {
                entry.solvent_name = Some(name.to_string());
            }
        }
        entry.plqy.extend(plqy);
        entry.abs.extend(abs);
        entry.em.extend(em);
    }

    let records: Vec<ChemFluorRecord> = groups
        .into_iter()
        .map(|((smiles, _), mut s)| ChemFluorRecord {
            smiles,
            solvent: s.solvent,
            solvent_name: s.solvent_name,
            plqy: mean(&mut s.plqy),
            absorption_nm: mean(&mut s.abs),
            emission_nm: mean(&mut s.em),
        })
        .collect();
    if records.is_empty() {
        return Err(DatasetError::NoValidRows);
    }
    Ok(Ingested { records, rejections, rows_read })
}

/// Solvent descriptors of water as recorded in the ingested data, found by a
/// solvent column equal to `water` or `O`.
pub fn water_solvent(records: &[ChemFluorRecord]) -> Option<SolventFeatures> {
    records.iter().find_map(|r| {
        let name = r.solvent_name.as_deref()?;
        (name.eq_ignore_ascii_case("water") || name == "O").then_some(r.solvent?)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    PlqyClass,
    AbsReg,
    EmReg,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::PlqyClass, Task::AbsReg, Task::EmReg];

    pub fn name(self) -> &'static str {
        match self {
            Task::PlqyClass => "plqy",
            Task::AbsReg => "absorption",
            Task::EmReg => "emission",
        }
    }

    pub fn is_classification(self) -> bool {
        self == Task::PlqyClass
    }

    fn label(self, r: &ChemFluorRecord) -> Option<f64> {
        match self {
            Task::PlqyClass => r.plqy.map(|p| f64::from(u8::from(p > PLQY_POSITIVE_ABOVE))),
            Task::AbsReg => r.absorption_nm,
            Task::EmReg => r.emission_nm,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct Example {
    pub smiles: String,
    pub solvent: SolventFeatures,
    pub features: FeatureVector,
    pub label: f64,
}

#[derive(Debug, Clone)]
pub struct TaskDataset {
    pub task: Task,
    pub examples: Vec<Example>,
}

impl TaskDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> TaskDataset {
        TaskDataset {
            task: self.task,
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
        }
    }

    /// Curated cache: canonical SMILES, solvent descriptors, label.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("smiles\tSP\tSdP\tSA\tSB\tlabel\n");
        for e in &self.examples {
            let s = e.solvent;
            out.push_str(&format!("{}\t{}\t{}\t{}\t{}\t{}\n", e.smiles, s.sp, s.sdp, s.sa, s.sb, e.label));
        }
        out
    }
}

/// Keeps records with the task's measurement and all four solvent
/// descriptors, and builds their feature vectors.
pub fn curate_task(records: &[ChemFluorRecord], task: Task) -> Result<TaskDataset, DatasetError> {
    let kept: Vec<(&ChemFluorRecord, SolventFeatures, f64)> = records
        .iter()
        .filter_map(|r| Some((r, r.solvent?, task.label(r)?)))
        .collect();
    if kept.is_empty() {
        return Err(DatasetError::EmptyTask(task));
    }
    let examples = kept
        .par_iter()
        .map(|(r, solvent, label)| {
            let graph = parse_smiles(&r.smiles).expect("canonical SMILES re-parses");
            Example {
                smiles: r.smiles.clone(),
                solvent: *solvent,
                features: build_feature_vector(&graph, solvent),
                label: *label,
            }
        })
        .collect();
    Ok(TaskDataset { task, examples })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CvSplit {
    pub fold_id: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` once, cuts it into `folds` contiguous blocks (the first
/// `n % folds` blocks one longer), and for fold `i` uses block `i` as test,
/// block `i + 1` (cyclically) as validation and the rest as training.
pub fn split_cv(n: usize, folds: usize, seed: u64) -> Result<Vec<CvSplit>, DatasetError> {
    if folds < 3 || n < folds {
        return Err(DatasetError::TooSmall { n, folds });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / folds;
    let extra = n % folds;
    let mut blocks = Vec::with_capacity(folds);
    let mut start = 0;
    for b in 0..folds {
        let len = base + usize::from(b < extra);
        blocks.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok((0..folds)
        .map(|i| {
            let v = (i + 1) % folds;
            let train = (0..folds)
                .filter(|&b| b != i && b != v)
                .flat_map(|b| blocks[b].iter().copied())
                .collect();
            CvSplit { fold_id: i, train, val: blocks[v].clone(), test: blocks[i].clone() }
        })
        .collect())
}
