//! Small statistics helpers: Wilson intervals, medians, log-log slopes.

use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wilson {
    pub successes: usize,
    pub trials: usize,
    pub frequency: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Wilson {
    pub fn new(successes: usize, trials: usize) -> Self {
        assert!(trials > 0, "Wilson interval needs at least one trial");
        assert!(successes <= trials);
        let n = trials as f64;
        let p = successes as f64 / n;
        let z2 = Z95 * Z95;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        Self {
            successes,
            trials,
            frequency: p,
            lo: (center - half).max(0.0),
            hi: (center + half).min(1.0),
        }
    }

    /// Interval for the complementary event.
    pub fn complement(&self) -> Self {
        Self::new(self.trials - self.successes, self.trials)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    ols_slope(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_reference_interval() {
        let w = Wilson::new(450, 500);
        assert!((w.frequency - 0.9).abs() < 1e-15);
        assert!((w.lo - 0.871).abs() < 1e-3, "{}", w.lo);
        assert!((w.hi - 0.923).abs() < 1e-3, "{}", w.hi);
    }

    #[test]
    fn wilson_all_successes() {
        let w = Wilson::new(20, 20);
        assert_eq!(w.frequency, 1.0);
        assert!(w.lo < 1.0 && w.hi == 1.0);
    }

    #[test]
    fn medians_and_slopes() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let xs = [1.0, 10.0, 100.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        assert!((loglog_slope(&xs, &ys) + 0.5).abs() < 1e-12);
    }
}
