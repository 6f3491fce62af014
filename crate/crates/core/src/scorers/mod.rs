//! Property predictors: the fingerprint MLP, the sp² network-size scorer,
//! checkpoints, metrics and the cross-validation harness.

pub mod metrics;
mod mlp;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{average_precision, average_ranks, mae, mean_std, mse, roc_auc, MetricError};
pub use mlp::{continue_training, train_mlp, ColumnNorm, Gradients, Head, MlpModel, TrainConfig, TrainOutcome};

use crate::dataset::{split_cv, DatasetError, Task, TaskDataset};
use crate::fingerprint::{build_feature_vector, FeatureVector, SolventFeatures};
use crate::molgraph::{sp2_network_size, MolecularGraph};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("input has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("loss became non-finite in epoch {epoch}; learning rate {learning_rate} is diverging")]
    Diverged { epoch: usize, learning_rate: f64 },
    #[error("empty training set")]
    EmptyDataset,
    #[error("non-finite training target")]
    NonFiniteTarget,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("scorer for {0} has no model loaded")]
    Uninitialized(PropertyKind),
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
    #[error("external scorer failed: {0}")]
    External(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PropertyKind {
    PlqyProb,
    AbsNm,
    EmNm,
    Sp2Size,
}

impl PropertyKind {
    pub const ALL: [PropertyKind; 4] = [
        PropertyKind::PlqyProb,
        PropertyKind::AbsNm,
        PropertyKind::EmNm,
        PropertyKind::Sp2Size,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PropertyKind::PlqyProb => "plqy",
            PropertyKind::AbsNm => "absorption",
            PropertyKind::EmNm => "emission",
            PropertyKind::Sp2Size => "sp2",
        }
    }
}

impl fmt::Display for PropertyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Adapter point for predictors implemented outside this crate.
pub trait MoleculeScorer: Send + Sync {
    fn score(&self, graph: &MolecularGraph, solvent: &SolventFeatures) -> Result<f64, ScorerError>;
}

#[derive(Clone)]
pub enum Backend {
    Mlp(Arc<MlpModel>),
    Sp2Network,
    External(Arc<dyn MoleculeScorer>),
    Uninitialized,
}

impl fmt::Debug for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Mlp(m) => write!(f, "Mlp({}x{}, {:?})", m.input_dim, m.hidden_dim, m.head),
            Backend::Sp2Network => f.write_str("Sp2Network"),
            Backend::External(_) => f.write_str("External"),
            Backend::Uninitialized => f.write_str("Uninitialized"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PropertyScorer {
    pub kind: PropertyKind,
    pub backend: Backend,
}

impl PropertyScorer {
    pub fn mlp(kind: PropertyKind, model: MlpModel) -> Self {
        PropertyScorer { kind, backend: Backend::Mlp(Arc::new(model)) }
    }

    pub fn sp2() -> Self {
        PropertyScorer { kind: PropertyKind::Sp2Size, backend: Backend::Sp2Network }
    }

    pub fn uninitialized(kind: PropertyKind) -> Self {
        PropertyScorer { kind, backend: Backend::Uninitialized }
    }

    pub fn score(&self, graph: &MolecularGraph, solvent: &SolventFeatures) -> Result<f64, ScorerError> {
        match &self.backend {
            Backend::Mlp(m) => m.forward(&build_feature_vector(graph, solvent)),
            Backend::Sp2Network => Ok(sp2_network_size(graph) as f64),
            Backend::External(s) => s.score(graph, solvent),
            Backend::Uninitialized => Err(ScorerError::Uninitialized(self.kind)),
        }
    }

    /// Scores many molecules; results keep input order.
    pub fn score_many(&self, graphs: &[&MolecularGraph], solvent: &SolventFeatures) -> Result<Vec<f64>, ScorerError> {
        graphs.par_iter().map(|g| self.score(g, solvent)).collect()
    }
}

pub fn score_property(scorer: &PropertyScorer, graph: &MolecularGraph, solvent: &SolventFeatures) -> Result<f64, ScorerError> {
    scorer.score(graph, solvent)
}

/// The three learned predictors plus the sp² algorithm.
#[derive(Debug, Clone)]
pub struct ScorerSet {
    pub plqy: PropertyScorer,
    pub absorption: PropertyScorer,
    pub emission: PropertyScorer,
    pub sp2: PropertyScorer,
}

impl ScorerSet {
    pub fn from_models(plqy: MlpModel, absorption: MlpModel, emission: MlpModel) -> Self {
        ScorerSet {
            plqy: PropertyScorer::mlp(PropertyKind::PlqyProb, plqy),
            absorption: PropertyScorer::mlp(PropertyKind::AbsNm, absorption),
            emission: PropertyScorer::mlp(PropertyKind::EmNm, emission),
            sp2: PropertyScorer::sp2(),
        }
    }

    pub fn get(&self, kind: PropertyKind) -> &PropertyScorer {
        match kind {
            PropertyKind::PlqyProb => &self.plqy,
            PropertyKind::AbsNm => &self.absorption,
            PropertyKind::EmNm => &self.emission,
            PropertyKind::Sp2Size => &self.sp2,
        }
    }

    /// Raw predictions in [`PropertyKind::ALL`] order.
    pub fn predict(&self, graph: &MolecularGraph, solvent: &SolventFeatures) -> Result<[f64; 4], ScorerError> {
        let fv = build_feature_vector(graph, solvent);
        let one = |s: &PropertyScorer| match &s.backend {
            Backend::Mlp(m) => m.forward(&fv),
            _ => s.score(graph, solvent),
        };
        Ok([one(&self.plqy)?, one(&self.absorption)?, one(&self.emission)?, one(&self.sp2)?])
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    format_version: u32,
    model: MlpModel,
}

const CHECKPOINT_FORMAT: &str = "fluorogen-mlp";

/// JSON checkpoint: format tag and version, then the model (dimensions,
/// seed, head, solvent-column normalisation and weights).
pub fn save_checkpoint(model: &MlpModel, path: &Path) -> Result<(), ScorerError> {
    let ck = Checkpoint { format: CHECKPOINT_FORMAT.into(), format_version: CHECKPOINT_FORMAT_VERSION, model: model.clone() };
    let err = |reason: String| ScorerError::Checkpoint { path: path.to_path_buf(), reason };
    let text = serde_json::to_string(&ck).map_err(|e| err(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| err(e.to_string()))
}

pub fn load_checkpoint(path: &Path) -> Result<MlpModel, ScorerError> {
    let err = |reason: String| ScorerError::Checkpoint { path: path.to_path_buf(), reason };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    if ck.format != CHECKPOINT_FORMAT || ck.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(err(format!("unsupported format {} v{}", ck.format, ck.format_version)));
    }
    let m = ck.model;
    let consistent = m.w1.len() == m.input_dim * m.hidden_dim
        && m.b1.len() == m.hidden_dim
        && m.w2.len() == m.hidden_dim
        && m.norm.start <= m.input_dim
        && m.norm.mean.len() == m.input_dim - m.norm.start
        && m.norm.std.len() == m.norm.mean.len()
        && m.norm.std.iter().all(|s| *s > 0.0);
    if !consistent || !m.is_finite() {
        return Err(err("inconsistent dimensions or non-finite weights".into()));
    }
    Ok(m)
}

pub fn head_for(task: Task) -> Head {
    if task.is_classification() {
        Head::Sigmoid
    } else {
        Head::Linear
    }
}

fn pairs<'a>(dataset: &'a TaskDataset, idx: &[usize]) -> Vec<(&'a FeatureVector, f64)> {
    idx.iter().map(|&i| (&dataset.examples[i].features, dataset.examples[i].label)).collect()
}

/// Trains on a seeded 90/10 train/validation split.
pub fn mlp_train(dataset: &TaskDataset, config: &TrainConfig) -> Result<MlpModel, ScorerError> {
    if dataset.is_empty() {
        return Err(ScorerError::EmptyDataset);
    }
    let all: Vec<usize> = (0..dataset.len()).collect();
    let (train, val) = if dataset.len() >= 10 {
        let split = &split_cv(dataset.len(), 10, config.seed)?[0];
        let mut train = split.train.clone();
        train.extend(&split.test);
        (train, split.val.clone())
    } else {
        (all, Vec::new())
    };
    Ok(train_mlp(&pairs(dataset, &train), &pairs(dataset, &val), head_for(dataset.task), config)?.model)
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub metric: f64,
    pub best_epoch: usize,
    pub model: MlpModel,
}

#[derive(Debug, Clone)]
pub struct CvReport {
    pub task: Task,
    pub metric_name: &'static str,
    pub folds: Vec<FoldResult>,
}

impl CvReport {
    pub fn values(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.metric).collect()
    }

    pub fn mean_std(&self) -> (f64, f64) {
        mean_std(&self.values())
    }

    pub fn higher_is_better(&self) -> bool {
        self.task.is_classification()
    }

    pub fn best_fold(&self) -> &FoldResult {
        let better = |a: &FoldResult, b: &FoldResult| {
            if self.higher_is_better() {
                a.metric > b.metric
            } else {
                a.metric < b.metric
            }
        };
        let mut best = &self.folds[0];
        for f in &self.folds[1..] {
            if better(f, best) {
                best = f;
            }
        }
        best
    }
}

pub const CV_REPORT_HEADER: &str = "model\ttask\tmetric\tmean\tstd\tsummary\tfolds";

impl fmt::Display for CvReport {
    /// One report row: `MLP-Morgan  plqy  ROC-AUC  0.896  0.019  0.896 ± 0.019  10`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (mean, std) = self.mean_std();
        write!(
            f,
            "MLP-Morgan\t{}\t{}\t{mean:.3}\t{std:.3}\t{mean:.3} ± {std:.3}\t{}",
            self.task,
            self.metric_name,
            self.folds.len()
        )
    }
}

/// k-fold cross-validation: per fold, train on the training block, early
/// stop on the validation block, and score the test block (ROC-AUC for
/// classification, MAE in nm for regression). Folds run in parallel;
/// results are in fold order and independent of the thread count.
pub fn cross_validate(dataset: &TaskDataset, folds: usize, config: &TrainConfig) -> Result<CvReport, ScorerError> {
    let splits = split_cv(dataset.len(), folds, config.seed)?;
    let head = head_for(dataset.task);
    let results: Result<Vec<FoldResult>, ScorerError> = splits
        .par_iter()
        .map(|s| {
            let cfg = TrainConfig { seed: config.seed.wrapping_add(s.fold_id as u64), ..config.clone() };
            let outcome = train_mlp(&pairs(dataset, &s.train), &pairs(dataset, &s.val), head, &cfg)?;
            let test = pairs(dataset, &s.test);
            let xs: Vec<&FeatureVector> = test.iter().map(|(x, _)| *x).collect();
            let preds = outcome.model.predict_many(&xs)?;
            let metric = match head {
                Head::Sigmoid => {
                    let labels: Vec<bool> = test.iter().map(|(_, y)| *y > 0.5).collect();
                    roc_auc(&preds, &labels)?
                }
                Head::Linear => {
                    let ys: Vec<f64> = test.iter().map(|(_, y)| *y).collect();
                    mae(&preds, &ys)?
                }
            };
            Ok(FoldResult { fold: s.fold_id, metric, best_epoch: outcome.best_epoch, model: outcome.model })
        })
        .collect();
    Ok(CvReport {
        task: dataset.task,
        metric_name: if head == Head::Sigmoid { "ROC-AUC" } else { "MAE" },
        folds: results?,
    })
}
