//! One-hidden-layer perceptron with hand-written backpropagation.
//!
//! `W1` is stored input-major (`w1[j * hidden + h]`) so a sparse input only
//! touches the rows of its non-zero features. A trailing block of columns
//! (the solvent descriptors) is standardised before use and always treated
//! as dense.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{mae, roc_auc};
use super::ScorerError;
use crate::fingerprint::{FeatureVector, SOLVENT_FEATURES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    /// Sigmoid output trained with binary cross-entropy.
    Sigmoid,
    /// Identity output trained with mean squared error.
    Linear,
}

/// Standardisation of the dense tail columns `start..input_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnNorm {
    pub start: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ColumnNorm {
    pub fn identity(input_dim: usize) -> Self {
        ColumnNorm { start: input_dim, mean: Vec::new(), std: Vec::new() }
    }

    /// Mean and standard deviation of the last `width` columns; a zero
    /// deviation is replaced by 1.
    pub fn fit(inputs: &[&FeatureVector], input_dim: usize, width: usize) -> Self {
        let start = input_dim - width.min(input_dim);
        let n = inputs.len().max(1) as f64;
        let mut mean = vec![0.0; input_dim - start];
        let mut std = vec![0.0; input_dim - start];
        for (k, j) in (start..input_dim).enumerate() {
            mean[k] = inputs.iter().map(|x| x.get(j)).sum::<f64>() / n;
            let var = inputs.iter().map(|x| (x.get(j) - mean[k]).powi(2)).sum::<f64>() / n;
            std[k] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        }
        ColumnNorm { start, mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub head: Head,
    pub norm: ColumnNorm,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_init_scale: f64,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_dim: 300,
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 60,
            batch_size: 32,
            seed: 0,
            weight_init_scale: 0.1,
            patience: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ScorerError> {
        let ok = self.hidden_dim > 0
            && self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.momentum)
            && self.epochs > 0
            && self.batch_size > 0
            && self.weight_init_scale > 0.0
            && self.patience > 0;
        if ok {
            Ok(())
        } else {
            Err(ScorerError::InvalidConfig(format!("{self:?}")))
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log(1 + eˣ) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Loss gradients. `w1` is dense but only rows listed in `touched` can be
/// non-zero.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub touched: Vec<usize>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Gradients {
    /// Flat view matching [`MlpModel::param`].
    pub fn flat(&self, i: usize) -> f64 {
        let (n1, nb1, nw2) = (self.w1.len(), self.b1.len(), self.w2.len());
        if i < n1 {
            self.w1[i]
        } else if i < n1 + nb1 {
            self.b1[i - n1]
        } else if i < n1 + nb1 + nw2 {
            self.w2[i - n1 - nb1]
        } else {
            self.b2
        }
    }
}

impl MlpModel {
    pub fn zeros(input_dim: usize, hidden_dim: usize, head: Head) -> Self {
        MlpModel {
            input_dim,
            hidden_dim,
            w1: vec![0.0; input_dim * hidden_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; hidden_dim],
            b2: 0.0,
            head,
            norm: ColumnNorm::identity(input_dim),
            seed: 0,
        }
    }

    /// `W1 ~ U(-s, s)`, `W2 ~ U(-1/√hidden, 1/√hidden)`, biases zero.
    pub fn random(input_dim: usize, hidden_dim: usize, head: Head, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = MlpModel::zeros(input_dim, hidden_dim, head);
        m.seed = seed;
        for w in &mut m.w1 {
            *w = rng.random_range(-scale..scale);
        }
        let a2 = 1.0 / (hidden_dim as f64).sqrt();
        for w in &mut m.w2 {
            *w = rng.random_range(-a2..a2);
        }
        m
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    /// Flat parameter order: W1, b1, W2, b2.
    pub fn param(&self, i: usize) -> f64 {
        let (n1, nb1, nw2) = (self.w1.len(), self.b1.len(), self.w2.len());
        if i < n1 {
            self.w1[i]
        } else if i < n1 + nb1 {
            self.b1[i - n1]
        } else if i < n1 + nb1 + nw2 {
            self.w2[i - n1 - nb1]
        } else {
            self.b2
        }
    }

    pub fn set_param(&mut self, i: usize, v: f64) {
        let (n1, nb1, nw2) = (self.w1.len(), self.b1.len(), self.w2.len());
        if i < n1 {
            self.w1[i] = v
        } else if i < n1 + nb1 {
            self.b1[i - n1] = v
        } else if i < n1 + nb1 + nw2 {
            self.w2[i - n1 - nb1] = v
        } else {
            self.b2 = v
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().chain(&self.b1).chain(&self.w2).all(|v| v.is_finite()) && self.b2.is_finite()
    }

    fn check_dim(&self, x: &FeatureVector) -> Result<(), ScorerError> {
        if x.len() != self.input_dim {
            return Err(ScorerError::DimensionMismatch { expected: self.input_dim, got: x.len() });
        }
        Ok(())
    }

    /// Visits `(row, value)` for every non-zero normalised input.
    fn for_each_input(&self, x: &FeatureVector, mut f: impl FnMut(usize, f64)) {
        for &(j, v) in x.nonzero() {
            let j = j as usize;
            if j >= self.norm.start {
                break;
            }
            f(j, v);
        }
        for (k, j) in (self.norm.start..self.input_dim).enumerate() {
            let v = (x.get(j) - self.norm.mean[k]) / self.norm.std[k];
            if v != 0.0 {
                f(j, v);
            }
        }
    }

    fn pre_activation(&self, x: &FeatureVector, z: &mut Vec<f64>) {
        z.clear();
        z.extend_from_slice(&self.b1);
        let h = self.hidden_dim;
        self.for_each_input(x, |j, v| {
            for (zk, w) in z.iter_mut().zip(&self.w1[j * h..(j + 1) * h]) {
                *zk += v * w;
            }
        });
    }

    /// Output before the head nonlinearity.
    fn logit(&self, x: &FeatureVector, z: &mut Vec<f64>) -> f64 {
        self.pre_activation(x, z);
        self.b2 + z.iter().zip(&self.w2).map(|(zk, w)| zk.max(0.0) * w).sum::<f64>()
    }

    fn apply_head(&self, o: f64) -> f64 {
        match self.head {
            Head::Sigmoid => sigmoid(o),
            Head::Linear => o,
        }
    }

    pub fn forward(&self, x: &FeatureVector) -> Result<f64, ScorerError> {
        self.check_dim(x)?;
        let mut z = Vec::with_capacity(self.hidden_dim);
        Ok(self.apply_head(self.logit(x, &mut z)))
    }

    /// Forward pass over many inputs; order of results matches the input.
    pub fn predict_many(&self, xs: &[&FeatureVector]) -> Result<Vec<f64>, ScorerError> {
        xs.par_iter().map(|x| self.forward(x)).collect()
    }

    fn example_loss(&self, o: f64, y: f64) -> (f64, f64) {
        match self.head {
            // BCE on the logit: softplus(o) - y·o, derivative σ(o) - y
            Head::Sigmoid => (softplus(o) - y * o, sigmoid(o) - y),
            Head::Linear => ((o - y) * (o - y), 2.0 * (o - y)),
        }
    }

    /// Mean loss over `batch` (BCE for the sigmoid head, MSE for the
    /// linear head).
    pub fn loss(&self, batch: &[(&FeatureVector, f64)]) -> f64 {
        let mut z = Vec::with_capacity(self.hidden_dim);
        let total: f64 = batch.iter().map(|(x, y)| self.example_loss(self.logit(x, &mut z), *y).0).sum();
        total / batch.len().max(1) as f64
    }

    pub fn loss_and_gradients(&self, batch: &[(&FeatureVector, f64)]) -> (f64, Gradients) {
        let mut g = Gradients {
            w1: vec![0.0; self.w1.len()],
            touched: Vec::new(),
            b1: vec![0.0; self.hidden_dim],
            w2: vec![0.0; self.hidden_dim],
            b2: 0.0,
        };
        let loss = self.accumulate(batch, &mut g);
        (loss, g)
    }

    /// Adds the batch gradient into `g` (which must be zeroed) and returns
    /// the mean loss.
    fn accumulate(&self, batch: &[(&FeatureVector, f64)], g: &mut Gradients) -> f64 {
        let h = self.hidden_dim;
        let scale = 1.0 / batch.len().max(1) as f64;
        let mut z = Vec::with_capacity(h);
        let mut dz = vec![0.0; h];
        let mut total = 0.0;
        for (x, y) in batch {
            let o = self.logit(x, &mut z);
            let (l, dl) = self.example_loss(o, *y);
            total += l;
            let d_o = dl * scale;
            g.b2 += d_o;
            for k in 0..h {
                let a = z[k].max(0.0);
                g.w2[k] += d_o * a;
                dz[k] = if z[k] > 0.0 { d_o * self.w2[k] } else { 0.0 };
                g.b1[k] += dz[k];
            }
            self.for_each_input(x, |j, v| {
                g.touched.push(j);
                for (gw, d) in g.w1[j * h..(j + 1) * h].iter_mut().zip(&dz) {
                    *gw += v * d;
                }
            });
        }
        g.touched.sort_unstable();
        g.touched.dedup();
        total * scale
    }
}

struct Sgd {
    lr: f64,
    momentum: f64,
    v_w1: Vec<f64>,
    v_b1: Vec<f64>,
    v_w2: Vec<f64>,
    v_b2: f64,
}

impl Sgd {
    fn new(model: &MlpModel, lr: f64, momentum: f64) -> Self {
        let dense = momentum > 0.0;
        Sgd {
            lr,
            momentum,
            v_w1: if dense { vec![0.0; model.w1.len()] } else { Vec::new() },
            v_b1: vec![0.0; model.hidden_dim],
            v_w2: vec![0.0; model.hidden_dim],
            v_b2: 0.0,
        }
    }

    fn step(&mut self, m: &mut MlpModel, g: &Gradients) {
        let h = m.hidden_dim;
        if self.momentum > 0.0 {
            let (mu, lr) = (self.momentum, self.lr);
            for ((w, v), gw) in m.w1.iter_mut().zip(&mut self.v_w1).zip(&g.w1) {
                *v = mu * *v - lr * gw;
                *w += *v;
            }
        } else {
            // untouched rows have zero gradient, so skipping them is exact
            for &j in &g.touched {
                for (w, gw) in m.w1[j * h..(j + 1) * h].iter_mut().zip(&g.w1[j * h..(j + 1) * h]) {
                    *w -= self.lr * gw;
                }
            }
        }
        let (mu, lr) = (self.momentum, self.lr);
        for ((w, v), gw) in m.b1.iter_mut().zip(&mut self.v_b1).zip(&g.b1) {
            *v = mu * *v - lr * gw;
            *w += *v;
        }
        for ((w, v), gw) in m.w2.iter_mut().zip(&mut self.v_w2).zip(&g.w2) {
            *v = mu * *v - lr * gw;
            *w += *v;
        }
        self.v_b2 = mu * self.v_b2 - lr * g.b2;
        m.b2 += self.v_b2;
    }
}

fn reset(g: &mut Gradients) {
    let h = g.b1.len();
    for &j in &g.touched {
        g.w1[j * h..(j + 1) * h].fill(0.0);
    }
    g.touched.clear();
    g.b1.fill(0.0);
    g.w2.fill(0.0);
    g.b2 = 0.0;
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub best_epoch: usize,
    /// Monitored validation score (ROC-AUC, or negated MAE / loss).
    pub best_score: f64,
    pub epochs_run: usize,
    pub train_loss: Vec<f64>,
}

/// Higher is better.
fn monitor_score(model: &MlpModel, data: &[(&FeatureVector, f64)]) -> f64 {
    let xs: Vec<&FeatureVector> = data.iter().map(|(x, _)| *x).collect();
    let preds = model.predict_many(&xs).expect("dimensions checked before training");
    let ys: Vec<f64> = data.iter().map(|(_, y)| *y).collect();
    match model.head {
        Head::Sigmoid => {
            let labels: Vec<bool> = ys.iter().map(|&y| y > 0.5).collect();
            roc_auc(&preds, &labels).unwrap_or_else(|_| -model.loss(data))
        }
        Head::Linear => -mae(&preds, &ys).unwrap_or(f64::INFINITY),
    }
}

fn fit(
    mut model: MlpModel,
    train: &[(&FeatureVector, f64)],
    val: &[(&FeatureVector, f64)],
    config: &TrainConfig,
    unscale: impl Fn(&MlpModel) -> MlpModel,
) -> Result<TrainOutcome, ScorerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f_ba7c);
    let mut opt = Sgd::new(&model, config.learning_rate, config.momentum);
    let mut g = Gradients {
        w1: vec![0.0; model.w1.len()],
        touched: Vec::new(),
        b1: vec![0.0; model.hidden_dim],
        w2: vec![0.0; model.hidden_dim],
        b2: 0.0,
    };
    let monitor: &[(&FeatureVector, f64)] = if val.is_empty() { train } else { val };
    let mut best = unscale(&model);
    let mut best_score = monitor_score(&best, monitor);
    let mut best_epoch = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut losses = Vec::new();
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut epochs_run = 0;
    for epoch in 1..=config.epochs {
        epochs_run = epoch;
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train[i]));
            reset(&mut g);
            let l = model.accumulate(&batch, &mut g);
            if !l.is_finite() {
                return Err(ScorerError::Diverged { epoch, learning_rate: config.learning_rate });
            }
            epoch_loss += l * chunk.len() as f64;
            opt.step(&mut model, &g);
        }
        losses.push(epoch_loss / train.len() as f64);
        if !model.is_finite() {
            return Err(ScorerError::Diverged { epoch, learning_rate: config.learning_rate });
        }
        let candidate = unscale(&model);
        let score = monitor_score(&candidate, monitor);
        if score > best_score {
            best_score = score;
            best = candidate;
            best_epoch = epoch;
        } else if epoch - best_epoch >= config.patience {
            break;
        }
    }
    Ok(TrainOutcome { model: best, best_epoch, best_score, epochs_run, train_loss: losses })
}

/// Trains a fresh model. Solvent columns (the last four inputs) are
/// standardised on the training set; linear-head targets are standardised
/// too and the scaling is folded back into the output layer, so the
/// returned model predicts in the original units. Returns the checkpoint
/// with the best validation score (validation falls back to the training
/// set when `val` is empty).
pub fn train_mlp(
    train: &[(&FeatureVector, f64)],
    val: &[(&FeatureVector, f64)],
    head: Head,
    config: &TrainConfig,
) -> Result<TrainOutcome, ScorerError> {
    config.validate()?;
    let Some((first, _)) = train.first() else {
        return Err(ScorerError::EmptyDataset);
    };
    let input_dim = first.len();
    for (x, y) in train.iter().chain(val) {
        if x.len() != input_dim {
            return Err(ScorerError::DimensionMismatch { expected: input_dim, got: x.len() });
        }
        if !y.is_finite() {
            return Err(ScorerError::NonFiniteTarget);
        }
    }
    let mut model = MlpModel::random(input_dim, config.hidden_dim, head, config.weight_init_scale, config.seed);
    let xs: Vec<&FeatureVector> = train.iter().map(|(x, _)| *x).collect();
    model.norm = ColumnNorm::fit(&xs, input_dim, SOLVENT_FEATURES);

    match head {
        Head::Sigmoid => fit(model, train, val, config, Clone::clone),
        Head::Linear => {
            let n = train.len() as f64;
            let mu = train.iter().map(|(_, y)| y).sum::<f64>() / n;
            let var = train.iter().map(|(_, y)| (y - mu) * (y - mu)).sum::<f64>() / n;
            let sigma = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
            let scaled: Vec<(&FeatureVector, f64)> = train.iter().map(|(x, y)| (*x, (y - mu) / sigma)).collect();
            let unscale = move |m: &MlpModel| {
                let mut out = m.clone();
                for w in &mut out.w2 {
                    *w *= sigma;
                }
                out.b2 = m.b2 * sigma + mu;
                out
            };
            // validation is monitored in original units through `unscale`
            fit(model, &scaled, val, config, unscale)
        }
    }
}

/// Warm-start training in the model's own output units; returns the best
/// checkpoint on the training loss (which may be the input model).
pub fn continue_training(
    model: &MlpModel,
    train: &[(&FeatureVector, f64)],
    config: &TrainConfig,
) -> Result<MlpModel, ScorerError> {
    config.validate()?;
    if train.is_empty() {
        return Err(ScorerError::EmptyDataset);
    }
    for (x, _) in train {
        model.check_dim(x)?;
    }
    let outcome = fit(model.clone(), train, &[], config, Clone::clone)?;
    Ok(outcome.model)
}
