//! Post-generation filtering, Tanimoto k-medoids clustering and novelty
//! against a reference set.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::{default_fingerprint, tanimoto, Fingerprint, SolventFeatures};
use crate::molgraph::parse_smiles;
use crate::scorers::{ScorerError, ScorerSet};

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("cannot form {k} clusters from {n} molecules")]
    TooFewMolecules { n: usize, k: usize },
    #[error("cluster count must be positive")]
    ZeroClusters,
    #[error("novelty needs a non-empty reference set")]
    EmptyReference,
    #[error("`{smiles}` is not a valid SMILES: {reason}")]
    BadSmiles { smiles: String, reason: String },
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterThresholds {
    /// Smallest sp² network size kept.
    pub sp2_min: usize,
    /// Smallest PLQY probability kept (inclusive).
    pub plqy_min: f64,
    pub wavelength_min: f64,
    pub wavelength_max: f64,
    /// A molecule is novel when its best reference similarity is below this.
    pub novelty_max: f64,
    pub clusters: usize,
    pub seed: u64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        FilterThresholds {
            sp2_min: 12,
            plqy_min: 0.5,
            wavelength_min: 420.0,
            wavelength_max: 750.0,
            novelty_max: 0.5,
            clusters: 100,
            seed: 0,
        }
    }
}

/// A molecule with its predicted properties.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredMolecule {
    pub smiles: String,
    pub fingerprint: Fingerprint,
    pub plqy_prob: f64,
    pub absorption_nm: f64,
    pub emission_nm: f64,
    pub sp2: usize,
}

/// Scores every SMILES with `scorers` in `solvent`; output keeps input order.
pub fn score_molecules(
    smiles: &[String],
    scorers: &ScorerSet,
    solvent: &SolventFeatures,
) -> Result<Vec<ScoredMolecule>, FilterError> {
    smiles
        .par_iter()
        .map(|s| {
            let g = parse_smiles(s).map_err(|e| FilterError::BadSmiles { smiles: s.clone(), reason: e.to_string() })?;
            let [plqy, abs, em, sp2] = scorers.predict(&g, solvent)?;
            Ok(ScoredMolecule {
                smiles: s.clone(),
                fingerprint: default_fingerprint(&g),
                plqy_prob: plqy,
                absorption_nm: abs,
                emission_nm: em,
                sp2: sp2 as usize,
            })
        })
        .collect()
}

/// Stage names in application order.
pub const STAGES: [&str; 4] = ["sp2_network", "plqy", "absorption", "emission"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageCount {
    pub name: &'static str,
    pub remaining: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FilterReport {
    pub input: usize,
    pub stages: Vec<StageCount>,
}

impl FilterReport {
    pub fn survivors(&self) -> usize {
        self.stages.last().map_or(self.input, |s| s.remaining)
    }
}

impl fmt::Display for FilterReport {
    /// `stage  remaining  rejected` rows, starting with the input count.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "stage\tremaining\trejected")?;
        writeln!(f, "input\t{}\t0", self.input)?;
        for s in &self.stages {
            writeln!(f, "{}\t{}\t{}", s.name, s.remaining, s.rejected)?;
        }
        Ok(())
    }
}

fn passes(stage: usize, m: &ScoredMolecule, t: &FilterThresholds) -> bool {
    let visible = |nm: f64| nm >= t.wavelength_min && nm <= t.wavelength_max;
    match stage {
        0 => m.sp2 >= t.sp2_min,
        1 => m.plqy_prob >= t.plqy_min,
        2 => visible(m.absorption_nm),
        _ => visible(m.emission_nm),
    }
}

/// Applies the four stages in order: sp² network at least `sp2_min`, PLQY
/// probability at least `plqy_min`, absorption and then emission inside
/// the wavelength window (both ends inclusive).
pub fn filter_scored(molecules: Vec<ScoredMolecule>, thresholds: &FilterThresholds) -> (Vec<ScoredMolecule>, FilterReport) {
    let mut report = FilterReport { input: molecules.len(), stages: Vec::with_capacity(STAGES.len()) };
    let mut kept = molecules;
    for (i, name) in STAGES.iter().enumerate() {
        let before = kept.len();
        kept.retain(|m| passes(i, m, thresholds));
        report.stages.push(StageCount { name, remaining: kept.len(), rejected: before - kept.len() });
    }
    (kept, report)
}

/// Scores `smiles` and filters them.
pub fn run_filters(
    smiles: &[String],
    scorers: &ScorerSet,
    solvent: &SolventFeatures,
    thresholds: &FilterThresholds,
) -> Result<(Vec<ScoredMolecule>, FilterReport), FilterError> {
    Ok(filter_scored(score_molecules(smiles, scorers, solvent)?, thresholds))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub k: usize,
    /// Cluster id per molecule.
    pub labels: Vec<usize>,
    /// Molecule index of each cluster's medoid.
    pub medoids: Vec<usize>,
    /// Summed point-to-medoid distance after each iteration.
    pub objective: Vec<f64>,
}

impl ClusterAssignment {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == cluster).collect()
    }
}

fn distance(a: &Fingerprint, b: &Fingerprint) -> f64 {
    1.0 - tanimoto(a, b).expect("fingerprints share one length")
}

pub const MAX_CLUSTER_ITERATIONS: usize = 100;

/// Nearest medoid per point (ties to the lower cluster id); each medoid is
/// pinned to its own cluster.
fn assign(fps: &[Fingerprint], medoids: &[usize]) -> (Vec<usize>, f64) {
    let mut labels: Vec<(usize, f64)> = fps
        .par_iter()
        .map(|fp| {
            let mut best = (0, f64::INFINITY);
            for (c, &m) in medoids.iter().enumerate() {
                let d = distance(fp, &fps[m]);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .collect();
    for (c, &m) in medoids.iter().enumerate() {
        labels[m] = (c, 0.0);
    }
    let cost = labels.iter().map(|l| l.1).sum();
    (labels.into_iter().map(|l| l.0).collect(), cost)
}

/// k-medoids under `1 − Tanimoto`. Seeds with farthest-point selection from
/// a seeded random start, then alternates assignment and medoid update
/// until the medoids stop changing or [`MAX_CLUSTER_ITERATIONS`] is hit.
pub fn cluster_tanimoto(fps: &[Fingerprint], k: usize, seed: u64) -> Result<ClusterAssignment, FilterError> {
    let n = fps.len();
    if k == 0 {
        return Err(FilterError::ZeroClusters);
    }
    if n < k {
        return Err(FilterError::TooFewMolecules { n, k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut medoids = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = fps.par_iter().map(|fp| distance(fp, &fps[medoids[0]])).collect();
    while medoids.len() < k {
        // farthest point; chosen medoids have distance 0 so exact duplicates
        // of a medoid are picked only once every distinct point is taken
        let mut next = None;
        for i in 0..n {
            if medoids.contains(&i) {
                continue;
            }
            if next.is_none_or(|j: usize| nearest[i] > nearest[j]) {
                next = Some(i);
            }
        }
        let next = next.expect("n >= k leaves a candidate");
        medoids.push(next);
        let fresh: Vec<f64> = fps.par_iter().map(|fp| distance(fp, &fps[next])).collect();
        for (d, f) in nearest.iter_mut().zip(fresh) {
            *d = d.min(f);
        }
    }

    let (mut labels, mut cost) = assign(fps, &medoids);
    let mut objective = vec![cost];
    for _ in 0..MAX_CLUSTER_ITERATIONS {
        let updated: Vec<usize> = (0..k)
            .into_par_iter()
            .map(|c| {
                let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
                let total = |cand: usize| members.iter().map(|&j| distance(&fps[cand], &fps[j])).sum::<f64>();
                let mut best = (medoids[c], total(medoids[c]));
                for &cand in &members {
                    let t = total(cand);
                    if t < best.1 - 1e-12 {
                        best = (cand, t);
                    }
                }
                best.0
            })
            .collect();
        if updated == medoids {
            break;
        }
        medoids = updated;
        (labels, cost) = assign(fps, &medoids);
        objective.push(cost);
    }
    Ok(ClusterAssignment { k, labels, medoids, objective })
}

/// All within-cluster and all across-cluster pairwise similarities.
pub fn cluster_similarity_histogram(assignment: &ClusterAssignment, fps: &[Fingerprint]) -> (Vec<f64>, Vec<f64>) {
    let n = fps.len();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (mut intra, mut inter) = (Vec::new(), Vec::new());
            for j in i + 1..n {
                let s = tanimoto(&fps[i], &fps[j]).expect("fingerprints share one length");
                if assignment.labels[i] == assignment.labels[j] {
                    intra.push(s);
                } else {
                    inter.push(s);
                }
            }
            (intra, inter)
        })
        .collect();
    let mut intra = Vec::new();
    let mut inter = Vec::new();
    for (a, b) in rows {
        intra.extend(a);
        inter.extend(b);
    }
    (intra, inter)
}

/// Counts of `values` in `bins` equal-width bins over [0, 1]; 1.0 falls in
/// the last bin.
pub fn histogram_unit(values: &[f64], bins: usize) -> Vec<usize> {
    let mut out = vec![0; bins];
    for v in values {
        let b = ((v * bins as f64) as usize).min(bins - 1);
        out[b] += 1;
    }
    out
}

/// Highest Tanimoto similarity of each molecule to any reference.
pub fn novelty(fps: &[Fingerprint], reference: &[Fingerprint]) -> Result<Vec<f64>, FilterError> {
    if reference.is_empty() {
        return Err(FilterError::EmptyReference);
    }
    Ok(fps
        .par_iter()
        .map(|fp| reference.iter().map(|r| tanimoto(fp, r).expect("fingerprints share one length")).fold(0.0, f64::max))
        .collect())
}

/// Novel means strictly below `threshold`.
pub fn is_novel(max_similarity: f64, threshold: f64) -> bool {
    max_similarity < threshold
}

#[derive(Debug, Clone, PartialEq)]
pub struct Representative {
    pub cluster: usize,
    pub medoid: usize,
    /// Members ordered by distance to the medoid, then index; the medoid
    /// comes first.
    pub ranked: Vec<usize>,
}

/// One entry per non-empty cluster for manual review.
pub fn select_representatives(assignment: &ClusterAssignment, fps: &[Fingerprint]) -> Vec<Representative> {
    (0..assignment.k)
        .filter_map(|c| {
            let medoid = assignment.medoids[c];
            let mut ranked = assignment.members(c);
            if ranked.is_empty() {
                return None;
            }
            ranked.sort_by(|&a, &b| {
                distance(&fps[medoid], &fps[a]).total_cmp(&distance(&fps[medoid], &fps[b])).then(a.cmp(&b))
            });
            Some(Representative { cluster: c, medoid, ranked })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fp(bits: &[usize]) -> Fingerprint {
        Fingerprint::from_bits(64, bits.iter().copied())
    }

    fn scored(sp2: usize, plqy: f64, abs: f64, em: f64) -> ScoredMolecule {
        ScoredMolecule {
            smiles: String::new(),
            fingerprint: fp(&[]),
            plqy_prob: plqy,
            absorption_nm: abs,
            emission_nm: em,
            sp2,
        }
    }

    #[test]
    fn stage_boundaries() {
        let t = FilterThresholds::default();
        let (kept, report) = filter_scored(vec![scored(11, 0.9, 500.0, 500.0)], &t);
        assert!(kept.is_empty());
        assert_eq!(report.stages[0].rejected, 1);
        let (kept, _) = filter_scored(vec![scored(12, 0.5, 420.0, 750.0)], &t);
        assert_eq!(kept.len(), 1);
        let (_, report) = filter_scored(vec![scored(12, 0.5, 419.0, 500.0)], &t);
        assert_eq!(report.stages.iter().map(|s| s.rejected).collect::<Vec<_>>(), [0, 0, 1, 0]);
        let (_, report) = filter_scored(vec![scored(12, 0.4999, 500.0, 500.0)], &t);
        assert_eq!(report.stages[1].rejected, 1);
        let (kept, report) = filter_scored(vec![], &t);
        assert!(kept.is_empty());
        assert!(report.stages.iter().all(|s| s.remaining == 0 && s.rejected == 0));
        assert_eq!(report.stages.iter().map(|s| s.name).collect::<Vec<_>>(), STAGES);
    }

    #[test]
    fn cluster_extremes() {
        let fps: Vec<Fingerprint> = (0..5).map(|i| fp(&[i, i + 1, 20])).collect();
        let a = cluster_tanimoto(&fps, 5, 1).unwrap();
        let mut labels = a.labels.clone();
        labels.sort_unstable();
        assert_eq!(labels, [0, 1, 2, 3, 4]);
        let one = cluster_tanimoto(&fps, 1, 1).unwrap();
        assert!(one.labels.iter().all(|&l| l == 0));
        let total = |m: usize| fps.iter().map(|f| distance(&fps[m], f)).sum::<f64>();
        let best = (0..5).map(total).fold(f64::INFINITY, f64::min);
        assert!((total(one.medoids[0]) - best).abs() < 1e-12);
        assert!(matches!(cluster_tanimoto(&fps, 6, 1), Err(FilterError::TooFewMolecules { n: 5, k: 6 })));
    }

    #[test]
    fn novelty_cases() {
        let refs = vec![fp(&[0, 1, 2]), fp(&[10, 11, 12, 13])];
        let n = novelty(&[fp(&[0, 1, 2]), fp(&[40, 41]), fp(&[10, 11, 20, 21])], &refs).unwrap();
        assert_eq!(n[0], 1.0);
        assert_eq!(n[1], 0.0);
        // 2 shared of 6 in the union against the second reference
        assert!((n[2] - 2.0 / 6.0).abs() < 1e-12);
        assert!(!is_novel(1.0, 0.5) && is_novel(0.0, 0.5) && !is_novel(0.5, 0.5));
        assert!(matches!(novelty(&refs, &[]), Err(FilterError::EmptyReference)));
    }

    #[test]
    fn histogram_counts() {
        let single = ClusterAssignment { k: 1, labels: vec![0; 4], medoids: vec![0], objective: vec![] };
        let fps: Vec<Fingerprint> = (0..4).map(|i| fp(&[i])).collect();
        let (intra, inter) = cluster_similarity_histogram(&single, &fps);
        assert_eq!(intra.len(), 6);
        assert!(inter.is_empty());
        assert_eq!(histogram_unit(&[0.0, 0.5, 1.0, 0.99], 2), [1, 3]);
    }
}
