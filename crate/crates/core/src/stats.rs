//! Small statistics helpers shared by the scoring, adaptive and harness code.

use rand::Rng;
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::rng::{rng_from_seed, SimRng};

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal upper tail, `1 - normal_cdf(z)` without cancellation.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Probability that a standard normal lands in `[a, b)`, accurate in both tails.
pub fn normal_interval(a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    if a >= 0.0 {
        (normal_sf(a) - normal_sf(b)).max(0.0)
    } else if b <= 0.0 {
        (normal_cdf(b) - normal_cdf(a)).max(0.0)
    } else {
        (1.0 - normal_cdf(a) - normal_sf(b)).max(0.0)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Linear-interpolated quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn excludes_zero(&self) -> bool {
        self.low > 0.0 || self.high < 0.0
    }
}

pub const BOOTSTRAP_RESAMPLES: usize = 2000;

/// Percentile bootstrap CI for the mean of `xs`.
pub fn bootstrap_mean_ci(xs: &[f64], level: f64, resamples: usize, seed: u64) -> Interval {
    bootstrap_ci(xs.len(), level, resamples, seed, |idx| {
        idx.iter().map(|&i| xs[i]).sum::<f64>() / idx.len() as f64
    })
}

/// Percentile bootstrap CI for `mean(num) / mean(den)`, resampling pairs.
pub fn bootstrap_ratio_ci(num: &[f64], den: &[f64], level: f64, resamples: usize, seed: u64) -> Interval {
    assert_eq!(num.len(), den.len());
    bootstrap_ci(num.len(), level, resamples, seed, |idx| {
        let n: f64 = idx.iter().map(|&i| num[i]).sum();
        let d: f64 = idx.iter().map(|&i| den[i]).sum();
        n / d
    })
}

fn bootstrap_ci<F>(n: usize, level: f64, resamples: usize, seed: u64, stat: F) -> Interval
where
    F: Fn(&[usize]) -> f64,
{
    if n == 0 {
        return Interval { low: f64::NAN, high: f64::NAN };
    }
    let mut rng: SimRng = rng_from_seed(seed);
    let mut idx = vec![0usize; n];
    let mut stats = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        for slot in idx.iter_mut() {
            *slot = rng.random_range(0..n);
        }
        stats.push(stat(&idx));
    }
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Interval {
        low: quantile_sorted(&stats, alpha),
        high: quantile_sorted(&stats, 1.0 - alpha),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_reference_points() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
        assert!((normal_sf(8.0) - 6.220960574271785e-16).abs() < 1e-28);
    }

    #[test]
    fn normal_interval_tails_do_not_cancel() {
        let p = normal_interval(10.0, 11.0);
        assert!(p > 0.0 && p < 1e-22);
        assert!((normal_interval(-1.0, 1.0) - 0.6826894921370859).abs() < 1e-13);
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert!((quantile_sorted(&v, 0.5) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn bootstrap_ci_brackets_the_mean() {
        let xs: Vec<f64> = (0..200).map(|i| (i % 7) as f64).collect();
        let ci = bootstrap_mean_ci(&xs, 0.95, 1000, 3);
        let m = mean(&xs);
        assert!(ci.low < m && m < ci.high);
        assert!(ci.excludes_zero());
    }
}
