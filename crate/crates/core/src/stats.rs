//! Confidence intervals and empirical CDFs.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{CoraxError, Result};

/// Samples above this size use the normal quantile; smaller ones use
/// Student's t with `n - 1` degrees of freedom.
pub const NORMAL_APPROX_MIN_N: usize = 31;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub n: usize,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub multiplier: f64,
}

/// Two-sided critical value for `n` samples at `level`.
pub fn ci_multiplier(n: usize, level: f64) -> Result<f64> {
    if n < 2 {
        return Err(CoraxError::UndefinedMetric(format!("CI needs n >= 2, got {n}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(CoraxError::Parameter(format!("confidence level {level} outside (0, 1)")));
    }
    let p = 0.5 + level / 2.0;
    let q = if n >= NORMAL_APPROX_MIN_N {
        Normal::standard().inverse_cdf(p)
    } else {
        StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .map_err(|e| CoraxError::Parameter(e.to_string()))?
            .inverse_cdf(p)
    };
    Ok(q)
}

pub fn mean(samples: &[f64]) -> f64 {
    if let Some(&first) = samples.first() {
        if samples.iter().all(|x| *x == first) {
            return first;
        }
    }
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(samples: &[f64]) -> f64 {
    let m = mean(samples);
    let ss: f64 = samples.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (samples.len() - 1) as f64).sqrt()
}

/// `mean ± c · sd / √n`.
pub fn confidence_interval(samples: &[f64], level: f64) -> Result<ConfidenceInterval> {
    let n = samples.len();
    let c = ci_multiplier(n, level)?;
    let m = mean(samples);
    let half = c * sample_sd(samples) / (n as f64).sqrt();
    Ok(ConfidenceInterval {
        n,
        mean: m,
        lower: m - half,
        upper: m + half,
        level,
        multiplier: c,
    })
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub x: f64,
    pub f: f64,
    /// Samples at or below `x`.
    pub count: usize,
}

/// Right-continuous step function with one point per distinct sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    pub n: usize,
    pub points: Vec<CdfPoint>,
}

impl EmpiricalCdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(CoraxError::EmptyInput("no samples for CDF".into()));
        }
        if samples.iter().any(|x| x.is_nan()) {
            return Err(CoraxError::Parameter("NaN sample".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mut points: Vec<CdfPoint> = Vec::new();
        for (i, x) in sorted.iter().enumerate() {
            match points.last_mut() {
                Some(p) if p.x == *x => {
                    p.count = i + 1;
                    p.f = (i + 1) as f64 / n as f64;
                }
                _ => points.push(CdfPoint {
                    x: *x,
                    f: (i + 1) as f64 / n as f64,
                    count: i + 1,
                }),
            }
        }
        Ok(EmpiricalCdf { n, points })
    }

    pub fn count_at_or_below(&self, x: f64) -> usize {
        let i = self.points.partition_point(|p| p.x <= x);
        if i == 0 { 0 } else { self.points[i - 1].count }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.count_at_or_below(x) as f64 / self.n as f64
    }

    /// Samples strictly greater than `x`.
    pub fn count_above(&self, x: f64) -> usize {
        self.n - self.count_at_or_below(x)
    }
}

pub fn empirical_cdf(samples: &[f64]) -> Result<EmpiricalCdf> {
    EmpiricalCdf::new(samples)
}
