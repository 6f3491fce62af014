//! Search-tree nodes, their encoding, the value models and the replay
//! buffer they are trained on.

use std::collections::VecDeque;
use std::sync::Arc;

use rayon::prelude::*;

use super::{GeneratorError, PROPERTIES};
use crate::fingerprint::{
    default_fingerprint, Fingerprint, FeatureVector, SolventFeatures, FEATURE_DIM, FINGERPRINT_BITS, SOLVENT_FEATURES,
};
use crate::molgraph::MolecularGraph;
use crate::scorers::{continue_training, ColumnNorm, Head, MlpModel, TrainConfig};

/// A building block or an intermediate product held by a node.
#[derive(Debug, Clone)]
pub struct Member {
    pub smiles: String,
    pub graph: Arc<MolecularGraph>,
    pub fingerprint: Fingerprint,
    /// Library index when the member is a building block.
    pub block: Option<usize>,
}

impl Member {
    pub fn new(smiles: String, graph: MolecularGraph, block: Option<usize>) -> Self {
        Member { fingerprint: default_fingerprint(&graph), graph: Arc::new(graph), smiles, block }
    }
}

/// Template being filled and the member filling each of its roles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pending {
    pub template: usize,
    pub filled: Vec<Option<usize>>,
}

impl Pending {
    pub fn next_role(&self) -> Option<usize> {
        self.filled.iter().position(Option::is_none)
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisNode {
    pub id: usize,
    pub members: Vec<Member>,
    pub pending: Option<Pending>,
    /// Reactions completed before this node.
    pub depth: usize,
}

impl SynthesisNode {
    /// Order-independent identity of the member set.
    pub fn key(&self) -> String {
        let mut s: Vec<&str> = self.members.iter().map(|m| m.smiles.as_str()).collect();
        s.sort_unstable();
        s.join(".")
    }
}

/// Bitwise OR of the member fingerprints followed by the solvent
/// descriptors.
pub fn node_features(node: &SynthesisNode, solvent: &SolventFeatures) -> Result<FeatureVector, GeneratorError> {
    let (first, rest) = node.members.split_first().ok_or(GeneratorError::EmptyNode(node.id))?;
    let mut fp = first.fingerprint.clone();
    for m in rest {
        fp = fp.union(&m.fingerprint).expect("fingerprints share one length");
    }
    Ok(FeatureVector::from_parts(&fp, solvent))
}

/// `V = Σ_k w_k Z_k(x)`.
pub fn value(features: &FeatureVector, models: &[MlpModel], weights: &[f64]) -> Result<f64, GeneratorError> {
    if models.len() != weights.len() {
        return Err(GeneratorError::ModelCount { models: models.len(), weights: weights.len() });
    }
    let mut v = 0.0;
    for (m, w) in models.iter().zip(weights) {
        v += w * m.forward(features)?;
    }
    Ok(v)
}

/// Fresh linear-head value models whose solvent columns are centred on
/// `solvent`, so a constant solvent contributes nothing.
pub fn initial_value_models(config: &TrainConfig, solvent: &SolventFeatures, seed: u64) -> Vec<MlpModel> {
    (0..PROPERTIES)
        .map(|k| {
            let mut m =
                MlpModel::random(FEATURE_DIM, config.hidden_dim, Head::Linear, config.weight_init_scale, seed + k as u64);
            m.norm = ColumnNorm {
                start: FINGERPRINT_BITS,
                mean: solvent.as_array().to_vec(),
                std: vec![1.0; SOLVENT_FEATURES],
            };
            m
        })
        .collect()
}

/// FIFO store of `(node features, M₁..M_L)` tuples.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    tuples: VecDeque<(FeatureVector, [f64; PROPERTIES])>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer { capacity, tuples: VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    pub fn push(&mut self, features: FeatureVector, scores: [f64; PROPERTIES]) {
        if self.capacity == 0 {
            return;
        }
        if self.tuples.len() == self.capacity {
            self.tuples.pop_front();
        }
        self.tuples.push_back((features, scores));
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &(FeatureVector, [f64; PROPERTIES])> {
        self.tuples.iter()
    }

    /// Training pairs for property `k`.
    pub fn pairs(&self, k: usize) -> Vec<(&FeatureVector, f64)> {
        self.tuples.iter().map(|(x, y)| (x, y[k])).collect()
    }

    /// Mean squared error of `model` against target `k`.
    pub fn mse(&self, model: &MlpModel, k: usize) -> Result<f64, GeneratorError> {
        if self.is_empty() {
            return Ok(0.0);
        }
        let xs: Vec<&FeatureVector> = self.tuples.iter().map(|(x, _)| x).collect();
        let preds = model.predict_many(&xs)?;
        let sse: f64 = preds.iter().zip(&self.tuples).map(|(p, (_, y))| (p - y[k]).powi(2)).sum();
        Ok(sse / self.len() as f64)
    }
}

/// Trains each model on its buffer column. A model is replaced only when
/// the update lowers its buffer MSE. Returns `(before, after)` per model.
pub fn train_value_models(
    models: &mut [MlpModel],
    buffer: &ReplayBuffer,
    config: &TrainConfig,
) -> Result<Vec<(f64, f64)>, GeneratorError> {
    if buffer.is_empty() {
        return Ok(models.iter().map(|_| (0.0, 0.0)).collect());
    }
    let updated: Vec<Result<(MlpModel, f64, f64), GeneratorError>> = models
        .par_iter()
        .enumerate()
        .map(|(k, m)| {
            let before = buffer.mse(m, k)?;
            let cfg = TrainConfig { seed: config.seed.wrapping_add(k as u64), ..config.clone() };
            let candidate = continue_training(m, &buffer.pairs(k), &cfg)?;
            let after = buffer.mse(&candidate, k)?;
            Ok(if after <= before { (candidate, before, after) } else { (m.clone(), before, before) })
        })
        .collect();
    let mut losses = Vec::with_capacity(models.len());
    for (slot, r) in models.iter_mut().zip(updated) {
        let (m, before, after) = r?;
        *slot = m;
        losses.push((before, after));
    }
    Ok(losses)
}
