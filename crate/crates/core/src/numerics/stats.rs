//! Running moments and batch-means standard errors.

use serde::{Deserialize, Serialize};

/// Welford accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            f64::INFINITY
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Mean and standard error of independent batch estimates.
    pub fn from_batches(batches: &[f64]) -> Estimate {
        let mut s = RunningStats::new();
        for &b in batches {
            s.push(b);
        }
        Estimate {
            value: s.mean(),
            std_error: s.std_error(),
        }
    }

    /// Number of standard errors separating this estimate from `target`.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.value - target) / self.std_error
    }
}
