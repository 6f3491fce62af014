//! Distribution comparison of generated and baseline molecule sets.

use std::fmt;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::scorers::average_ranks;

/// One-sided Mann–Whitney U test of "x tends to exceed y", normal
/// approximation with tie correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannWhitney {
    /// U statistic of `x`.
    pub u: f64,
    pub z: f64,
    pub p_greater: f64,
}

/// `None` when either sample is empty.
pub fn mann_whitney_greater(x: &[f64], y: &[f64]) -> Option<MannWhitney> {
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    if x.is_empty() || y.is_empty() {
        return None;
    }
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = average_ranks(&pooled);
    let r1: f64 = ranks[..x.len()].iter().sum();
    let u = r1 - n1 * (n1 + 1.0) / 2.0;
    let mean = n1 * n2 / 2.0;

    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let n = n1 + n2;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        // every value tied
        return Some(MannWhitney { u, z: 0.0, p_greater: 0.5 });
    }
    let z = (u - mean) / var.sqrt();
    let normal = Normal::standard();
    Some(MannWhitney { u, z, p_greater: 1.0 - normal.cdf(z) })
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyComparison {
    pub property: String,
    pub generated_n: usize,
    pub baseline_n: usize,
    pub generated_mean: f64,
    pub baseline_mean: f64,
    /// `generated_mean − baseline_mean`.
    pub shift: f64,
    pub test: Option<MannWhitney>,
}

pub const COMPARISON_HEADER: &str = "property\tn_generated\tn_baseline\tmean_generated\tmean_baseline\tshift\tU\tz\tp_greater";

impl fmt::Display for PropertyComparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
            self.property, self.generated_n, self.baseline_n, self.generated_mean, self.baseline_mean, self.shift
        )?;
        match self.test {
            Some(t) => write!(f, "\t{:.1}\t{:.4}\t{:.3e}", t.u, t.z, t.p_greater),
            None => write!(f, "\t\t\t"),
        }
    }
}

pub fn compare(property: &str, generated: &[f64], baseline: &[f64]) -> PropertyComparison {
    let (g, b) = (mean(generated), mean(baseline));
    PropertyComparison {
        property: property.to_string(),
        generated_n: generated.len(),
        baseline_n: baseline.len(),
        generated_mean: g,
        baseline_mean: b,
        shift: if generated.is_empty() || baseline.is_empty() { 0.0 } else { g - b },
        test: mann_whitney_greater(generated, baseline),
    }
}

/// Equal-width bins over `[lo, hi]`; values outside are clamped into the
/// end bins. Returns `(bin start, bin end, count)`.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<(f64, f64, usize)> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0; bins];
    for &v in values {
        let b = ((v - lo) / width).floor();
        counts[(b.max(0.0) as usize).min(bins - 1)] += 1;
    }
    counts.into_iter().enumerate().map(|(i, c)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mann_whitney_small_case() {
        // x entirely above y: U = n1 * n2
        let t = mann_whitney_greater(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.u, 9.0);
        // normal approximation: z = (9 - 4.5) / sqrt(3*3*7/12)
        assert!((t.z - 4.5 / 5.25f64.sqrt()).abs() < 1e-12);
        assert!(t.p_greater < 0.05);
        let same = mann_whitney_greater(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(same.u, 4.5);
        assert_eq!(same.z, 0.0);
        assert!(mann_whitney_greater(&[], &[1.0]).is_none());
        assert_eq!(mann_whitney_greater(&[1.0, 1.0], &[1.0]).unwrap().p_greater, 0.5);
    }

    #[test]
    fn identical_sets_have_zero_shift() {
        let v = [0.2, 0.7, 0.9];
        let c = compare("plqy", &v, &v);
        assert_eq!(c.shift, 0.0);
        assert!((c.test.unwrap().p_greater - 0.5).abs() < 1e-12);
        assert_eq!(compare("plqy", &[], &[]).shift, 0.0);
    }

    #[test]
    fn histogram_bins() {
        let h = histogram(&[0.0, 0.49, 0.5, 1.0, 7.0, -1.0], 0.0, 1.0, 2);
        assert_eq!(h, vec![(0.0, 0.5, 3), (0.5, 1.0, 3)]);
    }
}
