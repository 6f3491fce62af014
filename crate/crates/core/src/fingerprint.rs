//! Circular (Morgan-style) fingerprints, solvent-conditioned feature vectors
//! and Tanimoto similarity.
//!
//! Environment identifiers are hashed with a fixed FNV-1a/SplitMix64
//! construction over little-endian words, so bit positions are identical on
//! every platform and run. They do not reproduce RDKit's bit positions.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::molgraph::MolecularGraph;

pub const FINGERPRINT_BITS: usize = 2048;
pub const FINGERPRINT_RADIUS: usize = 2;
pub const SOLVENT_FEATURES: usize = 4;
pub const FEATURE_DIM: usize = FINGERPRINT_BITS + SOLVENT_FEATURES;

const HASH_SEED: u64 = 0x6d6f_7267_616e_3031; // "morgan01"
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("fingerprint length mismatch: {left} vs {right} bits")]
pub struct LengthMismatch {
    pub left: usize,
    pub right: usize,
}

/// Stable 64-bit hash of a word sequence.
fn hash_words(words: &[u64]) -> u64 {
    let mut h = FNV_OFFSET ^ HASH_SEED;
    for w in words {
        for byte in w.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    // SplitMix64 finaliser spreads FNV's weak low bits before folding.
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    words: Vec<u64>,
    nbits: usize,
    popcount: u32,
}

impl Fingerprint {
    pub fn zeros(nbits: usize) -> Self {
        Fingerprint {
            words: vec![0; nbits.div_ceil(64)],
            nbits,
            popcount: 0,
        }
    }

    /// Builds a fingerprint with the given bits set (indices wrap modulo
    /// `nbits`).
    pub fn from_bits<I: IntoIterator<Item = usize>>(nbits: usize, bits: I) -> Self {
        let mut fp = Fingerprint::zeros(nbits);
        for b in bits {
            fp.set(b);
        }
        fp
    }

    pub fn set(&mut self, bit: usize) {
        let bit = bit % self.nbits;
        let mask = 1u64 << (bit % 64);
        let word = &mut self.words[bit / 64];
        if *word & mask == 0 {
            *word |= mask;
            self.popcount += 1;
        }
    }

    pub fn get(&self, bit: usize) -> bool {
        bit < self.nbits && (self.words[bit / 64] >> (bit % 64)) & 1 == 1
    }

    pub fn nbits(&self) -> usize {
        self.nbits
    }

    pub fn popcount(&self) -> u32 {
        self.popcount
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            let mut rest = word;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let t = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(w * 64 + t)
            })
        })
    }

    /// Bitwise OR.
    pub fn union(&self, other: &Fingerprint) -> Result<Fingerprint, LengthMismatch> {
        self.check(other)?;
        let words: Vec<u64> = self.words.iter().zip(&other.words).map(|(a, b)| a | b).collect();
        let popcount = words.iter().map(|w| w.count_ones()).sum();
        Ok(Fingerprint { words, nbits: self.nbits, popcount })
    }

    fn check(&self, other: &Fingerprint) -> Result<(), LengthMismatch> {
        if self.nbits != other.nbits {
            return Err(LengthMismatch { left: self.nbits, right: other.nbits });
        }
        Ok(())
    }
}

/// |a ∧ b| / |a ∨ b|; 1.0 when both fingerprints are empty.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, LengthMismatch> {
    a.check(b)?;
    let mut and = 0u32;
    let mut or = 0u32;
    for (x, y) in a.words.iter().zip(&b.words) {
        and += (x & y).count_ones();
        or += (x | y).count_ones();
    }
    Ok(if or == 0 { 1.0 } else { and as f64 / or as f64 })
}

/// Morgan fingerprint with environment deduplication.
///
/// Radius-0 identifiers hash (atomic number, degree, charge, hydrogens,
/// aromaticity). Each further layer hashes the previous identifier with the
/// sorted `(bond order, neighbour identifier)` pairs. An environment is kept
/// only the first time its bond set appears; when several atoms reach the
/// same bond set in one layer the smallest identifier wins. Atoms whose
/// environment stops growing drop out.
pub fn morgan_fingerprint(graph: &MolecularGraph, radius: usize, nbits: usize) -> Fingerprint {
    assert!(nbits > 0, "nbits must be positive");
    let n = graph.atom_count();
    let mut fp = Fingerprint::zeros(nbits);
    let mut ids: Vec<u64> = (0..n)
        .map(|i| {
            let atom = &graph.atoms()[i];
            hash_words(&[
                0,
                atom.element.atomic_number() as u64,
                graph.degree(i) as u64,
                atom.formal_charge as i64 as u64,
                graph.total_h(i) as u64,
                atom.aromatic as u64,
            ])
        })
        .collect();
    for &id in &ids {
        fp.set((id % nbits as u64) as usize);
    }

    let bond_words = graph.bond_count().div_ceil(64).max(1);
    let mut envs: Vec<Vec<u64>> = vec![vec![0; bond_words]; n];
    let mut alive = vec![true; n];
    let mut seen: HashSet<Vec<u64>> = HashSet::new();

    for layer in 1..=radius {
        let mut next_ids = ids.clone();
        let mut next_envs = envs.clone();
        let mut candidates: Vec<(Vec<u64>, u64)> = Vec::new();
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            let mut pairs: Vec<(u64, u64)> = graph
                .neighbors(i)
                .iter()
                .map(|&(v, b)| (graph.bonds()[b].order.code() as u64, ids[v]))
                .collect();
            pairs.sort_unstable();
            let mut words = vec![layer as u64, ids[i]];
            for (order, id) in pairs {
                words.push(order);
                words.push(id);
            }
            let id = hash_words(&words);

            let mut env = envs[i].clone();
            for &(v, b) in graph.neighbors(i) {
                env[b / 64] |= 1 << (b % 64);
                for (e, w) in env.iter_mut().zip(&envs[v]) {
                    *e |= w;
                }
            }
            if env == envs[i] {
                alive[i] = false;
                continue;
            }
            next_ids[i] = id;
            next_envs[i] = env.clone();
            candidates.push((env, id));
        }
        candidates.sort_unstable();
        candidates.dedup_by(|later, first| later.0 == first.0);
        for (env, id) in candidates {
            if seen.insert(env) {
                fp.set((id % nbits as u64) as usize);
            }
        }
        ids = next_ids;
        envs = next_envs;
    }
    fp
}

/// The fingerprint used throughout the pipeline: radius 2, 2,048 bits.
pub fn default_fingerprint(graph: &MolecularGraph) -> Fingerprint {
    morgan_fingerprint(graph, FINGERPRINT_RADIUS, FINGERPRINT_BITS)
}

/// Catalán solvent scales: polarizability, dipolarity, acidity, basicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolventFeatures {
    pub sp: f64,
    pub sdp: f64,
    pub sa: f64,
    pub sb: f64,
}

impl SolventFeatures {
    /// Catalán descriptors of water.
    pub const WATER: SolventFeatures = SolventFeatures { sp: 0.681, sdp: 0.997, sa: 1.062, sb: 0.025 };

    pub fn new(sp: f64, sdp: f64, sa: f64, sb: f64) -> Self {
        SolventFeatures { sp, sdp, sa, sb }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.sp, self.sdp, self.sa, self.sb]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }

    /// Bit-exact key for grouping identical solvent rows.
    pub fn key(&self) -> [u64; 4] {
        self.as_array().map(f64::to_bits)
    }
}

/// Model input of fixed length, stored sparsely: fingerprint blocks are
/// mostly zero, so only non-zero entries are kept (sorted by index).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    len: usize,
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn from_values(values: Vec<f64>) -> Self {
        let entries = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .collect();
        FeatureVector { len: values.len(), entries }
    }

    /// Fingerprint bits as 0/1 followed by `[SP, SdP, SA, SB]`.
    pub fn from_parts(fp: &Fingerprint, solvent: &SolventFeatures) -> Self {
        let mut entries: Vec<(u32, f64)> = fp.ones().map(|b| (b as u32, 1.0)).collect();
        for (k, v) in solvent.as_array().into_iter().enumerate() {
            if v != 0.0 {
                entries.push(((fp.nbits() + k) as u32, v));
            }
        }
        FeatureVector { len: fp.nbits() + SOLVENT_FEATURES, entries }
    }

    /// Dense copy of all values.
    pub fn values(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for &(i, v) in &self.entries {
            out[i as usize] = v;
        }
        out
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.entries.binary_search_by_key(&(index as u32), |e| e.0) {
            Ok(k) => self.entries[k].1,
            Err(_) => 0.0,
        }
    }

    /// Non-zero `(index, value)` pairs in index order.
    pub fn nonzero(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

pub fn build_feature_vector(graph: &MolecularGraph, solvent: &SolventFeatures) -> FeatureVector {
    FeatureVector::from_parts(&default_fingerprint(graph), solvent)
}
