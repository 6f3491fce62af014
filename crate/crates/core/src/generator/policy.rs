//! Sampling, reward and the two feedback controllers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GenerationConfig, GeneratorError, PROPERTIES};

/// How the sp² network size enters the reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sp2Reward {
    /// `min(size / threshold, 1)`.
    Clamp,
    /// The size itself.
    Raw,
    /// 1 when `size >= threshold`, else 0.
    Binary,
}

/// Property weights on the simplex, in [`crate::scorers::PropertyKind::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropertyWeights {
    w: [f64; PROPERTIES],
}

impl PropertyWeights {
    pub fn uniform() -> Self {
        PropertyWeights { w: [1.0 / PROPERTIES as f64; PROPERTIES] }
    }

    /// Accepts non-negative weights summing to 1 (within 1e-9).
    pub fn new(w: [f64; PROPERTIES]) -> Result<Self, GeneratorError> {
        let sum: f64 = w.iter().sum();
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(GeneratorError::InvalidWeights(w.to_vec()));
        }
        Ok(PropertyWeights { w })
    }

    pub fn as_array(&self) -> [f64; PROPERTIES] {
        self.w
    }

    pub fn combine(&self, scores: &[f64; PROPERTIES]) -> f64 {
        self.w.iter().zip(scores).map(|(w, m)| w * m).sum()
    }
}

/// Softmax of `values / tau` with the maximum subtracted first.
pub fn softmax(values: &[f64], tau: f64) -> Result<Vec<f64>, GeneratorError> {
    if values.is_empty() {
        return Err(GeneratorError::NoCandidates);
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(GeneratorError::InvalidConfig(format!("temperature {tau}")));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(GeneratorError::NonFiniteValue(*v));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = values.iter().map(|v| ((v - max) / tau).exp()).collect();
    let z: f64 = e.iter().sum();
    Ok(e.into_iter().map(|x| x / z).collect())
}

/// Index drawn with probability `exp(V_i / tau) / Σ exp(V_j / tau)`.
pub fn sample_child<R: Rng + ?Sized>(values: &[f64], tau: f64, rng: &mut R) -> Result<usize, GeneratorError> {
    let p = softmax(values, tau)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return Ok(i);
        }
    }
    // u landed in the rounding gap above the last cumulative sum
    Ok(p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1))
}

/// Maps raw predictions `[plqy prob, abs nm, em nm, sp² size]` to the
/// per-property scores M₁..M₄.
pub fn property_scores(raw: &[f64; PROPERTIES], config: &GenerationConfig) -> [f64; PROPERTIES] {
    let window = |nm: f64| f64::from(u8::from(nm >= config.wavelength_min && nm <= config.wavelength_max));
    let t = config.sp2_threshold as f64;
    let sp2 = match config.sp2_reward {
        Sp2Reward::Clamp => (raw[3] / t).min(1.0),
        Sp2Reward::Raw => raw[3],
        Sp2Reward::Binary => f64::from(u8::from(raw[3] >= t)),
    };
    [raw[0], window(raw[1]), window(raw[2]), sp2]
}

/// Per-property success flags used by the weight controller.
pub fn successes(raw: &[f64; PROPERTIES], config: &GenerationConfig) -> [bool; PROPERTIES] {
    let m = property_scores(raw, config);
    [raw[0] >= config.plqy_success, m[1] == 1.0, m[2] == 1.0, raw[3] >= config.sp2_threshold as f64]
}

/// `(M, p(m))` for raw predictions under `weights`.
pub fn reward(raw: &[f64; PROPERTIES], weights: &PropertyWeights, config: &GenerationConfig) -> ([f64; PROPERTIES], f64) {
    let m = property_scores(raw, config);
    (m, weights.combine(&m))
}

/// `τ · (1 + η (s̄ − λ*))`, clamped to the configured bounds. An empty
/// history leaves `τ` unchanged.
pub fn tune_temperature(history: &[f64], tau: f64, config: &GenerationConfig) -> f64 {
    if history.is_empty() {
        return tau;
    }
    let mean = history.iter().sum::<f64>() / history.len() as f64;
    (tau * (1.0 + config.tau_gain * (mean - config.target_similarity))).clamp(config.tau_min, config.tau_max)
}

/// `w_k = w_min + (1 − L·w_min) · (1 − r_k) / Σ_j (1 − r_j)`; uniform when
/// every rate is 1. The floor is applied before normalisation so the
/// result both sums to 1 and respects it.
pub fn tune_weights(rates: &[f64; PROPERTIES], floor: f64) -> PropertyWeights {
    let deficit: Vec<f64> = rates.iter().map(|r| (1.0 - r).clamp(0.0, 1.0)).collect();
    let total: f64 = deficit.iter().sum();
    if total <= 0.0 {
        return PropertyWeights::uniform();
    }
    let free = 1.0 - PROPERTIES as f64 * floor;
    let mut w = [0.0; PROPERTIES];
    for (k, d) in deficit.iter().enumerate() {
        w[k] = floor + free * d / total;
    }
    PropertyWeights { w }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_cases() {
        let p = softmax(&[1.0, 0.0], 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((p[0] - e / (1.0 + e)).abs() < 1e-12);
        let p = softmax(&[0.3, 0.3, 0.3], 0.01).unwrap();
        assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-12));
        let p = softmax(&[5.0, -3.0, 1.0], 1e9).unwrap();
        assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-6));
        // no overflow for large values at small temperature
        let p = softmax(&[1000.0, 999.0], 0.001).unwrap();
        assert!(p[0] > 0.999 && p.iter().all(|x| x.is_finite()));
        assert!(matches!(softmax(&[f64::NAN], 1.0), Err(GeneratorError::NonFiniteValue(_))));
        assert!(softmax(&[], 1.0).is_err());
        assert!(softmax(&[1.0], 0.0).is_err());
    }

    #[test]
    fn sampling_is_seeded() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| sample_child(&[0.1, 0.5, 0.2], 0.3, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
    }

    #[test]
    fn reward_cases() {
        let c = GenerationConfig::default();
        let m = property_scores(&[0.7, 500.0, 300.0, 6.0], &c);
        assert_eq!(m, [0.7, 1.0, 0.0, 0.5]);
        assert_eq!(property_scores(&[0.0, 419.0, 420.0, 13.0], &c)[1..], [0.0, 1.0, 1.0]);
        assert_eq!(property_scores(&[0.0, 750.0, 750.1, 12.0], &c)[1..], [1.0, 0.0, 1.0]);
        let (_, p) = reward(&[1.0, 500.0, 500.0, 20.0], &PropertyWeights::uniform(), &c);
        assert!((p - 1.0).abs() < 1e-12);
        let raw = GenerationConfig { sp2_reward: Sp2Reward::Raw, ..c.clone() };
        assert_eq!(property_scores(&[0.0, 0.0, 0.0, 6.0], &raw)[3], 6.0);
        let bin = GenerationConfig { sp2_reward: Sp2Reward::Binary, ..c.clone() };
        assert_eq!(property_scores(&[0.0, 0.0, 0.0, 11.0], &bin)[3], 0.0);
        assert_eq!(successes(&[0.5, 420.0, 750.0, 12.0], &c), [true; 4]);
        assert_eq!(successes(&[0.49, 419.0, 751.0, 11.0], &c), [false; 4]);
    }

    #[test]
    fn weighted_value_arithmetic() {
        let w = PropertyWeights::new([0.4, 0.2, 0.2, 0.2]).unwrap();
        assert!((w.combine(&[0.5, 1.0, 0.0, 0.5]) - 0.5).abs() < 1e-12);
        assert!(PropertyWeights::new([0.5, 0.5, 0.5, 0.0]).is_err());
    }

    #[test]
    fn temperature_controller() {
        let c = GenerationConfig { tau_init: 0.1, tau_min: 0.01, tau_max: 1.0, ..Default::default() };
        assert_eq!(tune_temperature(&[0.6, 0.6], 0.1, &c), 0.1);
        assert!(tune_temperature(&[0.8], 0.1, &c) > 0.1);
        assert!(tune_temperature(&[0.2], 0.1, &c) < 0.1);
        assert_eq!(tune_temperature(&[1.0], 1.0, &c), 1.0);
        assert_eq!(tune_temperature(&[0.0], 0.01, &c), 0.01);
        assert_eq!(tune_temperature(&[], 0.3, &c), 0.3);
    }

    #[test]
    fn weight_controller() {
        let w = tune_weights(&[0.3; 4], 0.05).as_array();
        assert!(w.iter().all(|x| (x - 0.25).abs() < 1e-12));
        let w = tune_weights(&[0.0, 1.0, 1.0, 1.0], 0.05).as_array();
        assert!(w[0] > w[1] && w[1] == w[2] && w[2] == w[3]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&x| x >= 0.05));
        assert_eq!(tune_weights(&[1.0; 4], 0.05), PropertyWeights::uniform());
    }
}
