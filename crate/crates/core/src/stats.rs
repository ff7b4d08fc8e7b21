//! Sample statistics used by the Monte Carlo estimators. All folds are
//! sequential in index order, so results are reproducible bit for bit.

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    pub fn new(mean: f64, se: f64) -> Self {
        Self { mean, se }
    }

    /// Sample mean and `s/√N`.
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::new(f64::NAN, f64::NAN);
        }
        if values.iter().all(|v| *v == values[0]) {
            return Self::new(values[0], 0.0);
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self::new(mean, 0.0);
        }
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        Self::new(mean, (ss / (n - 1) as f64 / n as f64).sqrt())
    }

    /// Difference of two independent estimates.
    pub fn minus(self, other: Self) -> Self {
        Self::new(self.mean - other.mean, combined_se(self.se, other.se))
    }

    /// `|mean − target| ≤ k·se + slack`.
    pub fn within(&self, target: f64, k: f64, slack: f64) -> bool {
        (self.mean - target).abs() <= k * self.se + slack
    }
}

/// `√(a² + b²)`.
pub fn combined_se(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

/// Sample standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    Estimate::from_samples(values).se * (values.len() as f64).sqrt()
}

/// Standard error of the sample mean from `resamples` bootstrap replicates.
pub fn bootstrap_se(values: &[f64], resamples: usize, seed: u64) -> f64 {
    let n = values.len();
    if n < 2 || resamples < 2 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = alloc::vec::Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut acc = 0.0;
        for _ in 0..n {
            acc += values[(rng.next_u64() % n as u64) as usize];
        }
        means.push(acc / n as f64);
    }
    std_dev(&means)
}

/// Empirical quantile with linear interpolation; `sorted` must be ascending.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let w = pos - lo as f64;
    (1.0 - w) * sorted[lo] + w * sorted[hi]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_of_known_sample() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn bootstrap_tracks_analytic_standard_error() {
        let v: alloc::vec::Vec<f64> = (0..2000)
            .map(|i| ((i * 7919) % 1000) as f64 / 1000.0)
            .collect();
        let a = Estimate::from_samples(&v).se;
        let b = bootstrap_se(&v, 400, 3);
        assert!((b / a - 1.0).abs() < 0.15);
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(quantile(&s, 0.0), 0.0);
        assert_eq!(quantile(&s, 1.0), 3.0);
        assert!((quantile(&s, 0.5) - 1.5).abs() < 1e-15);
    }
}
