//! Small statistical helpers: compensated sums, Wilson intervals, OLS, Pearson.

use serde::{Deserialize, Serialize};

/// 97.5% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Kahan–Babuška compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn kahan_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut k = KahanSum::new();
    for x in xs {
        k.add(x);
    }
    k.value()
}

/// A probability estimate with its 95% Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Proportion {
    pub fn new(successes: u64, trials: u64) -> Self {
        let (lo, hi) = wilson_interval(successes, trials, Z95);
        let estimate = if trials == 0 { 0.0 } else { successes as f64 / trials as f64 };
        Self { successes, trials, estimate, ci_low: lo, ci_high: hi }
    }

    /// Binomial standard error of the estimate.
    pub fn std_error(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        (self.estimate * (1.0 - self.estimate) / self.trials as f64).sqrt()
    }
}

pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k as f64 == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Sample mean with a normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

pub fn mean_estimate(xs: &[f64]) -> MeanEstimate {
    let n = xs.len();
    if n == 0 {
        return MeanEstimate { mean: 0.0, std_error: 0.0, ci_low: 0.0, ci_high: 0.0, n };
    }
    let mean = kahan_sum(xs.iter().copied()) / n as f64;
    let var = if n > 1 {
        kahan_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1) as f64
    } else {
        0.0
    };
    let se = (var / n as f64).sqrt();
    MeanEstimate { mean, std_error: se, ci_low: mean - Z95 * se, ci_high: mean + Z95 * se, n }
}

/// Ordinary least squares fit y = intercept + slope·x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
    pub r_squared: f64,
    pub sse: f64,
    pub n: usize,
}

pub fn ols(x: &[f64], y: &[f64]) -> Option<OlsFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = kahan_sum(x.iter().copied()) / nf;
    let my = kahan_sum(y.iter().copied()) / nf;
    let sxx = kahan_sum(x.iter().map(|v| (v - mx) * (v - mx)));
    if sxx <= 0.0 {
        return None;
    }
    let sxy = kahan_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let syy = kahan_sum(y.iter().map(|v| (v - my) * (v - my)));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = kahan_sum(x.iter().zip(y).map(|(a, b)| {
        let r = b - intercept - slope * a;
        r * r
    }));
    let slope_std_error = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Some(OlsFit { slope, intercept, slope_std_error, r_squared, sse, n })
}

/// Pearson correlation, `None` when either sample has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = kahan_sum(x.iter().copied()) / nf;
    let my = kahan_sum(y.iter().copied()) / nf;
    let sxx = kahan_sum(x.iter().map(|v| (v - mx) * (v - mx)));
    let syy = kahan_sum(y.iter().map(|v| (v - my) * (v - my)));
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    let sxy = kahan_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_beats_naive_sum() {
        let xs: Vec<f64> = std::iter::once(1.0).chain(std::iter::repeat(1e-16).take(10_000)).collect();
        assert!((kahan_sum(xs.iter().copied()) - (1.0 + 1e-12)).abs() < 1e-15);
    }

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson_interval(30, 100, Z95);
        assert!(lo < 0.3 && 0.3 < hi);
        let (lo, hi) = wilson_interval(0, 100, Z95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
    }

    #[test]
    fn ols_recovers_line() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v).collect();
        let f = ols(&x, &y).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-12);
        assert!((f.intercept - 3.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_degenerate() {
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_none());
        let r = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.5]).unwrap();
        assert!(r > 0.99);
    }
}
