//! Exponential decay fits on log-values.

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// `log v ≈ intercept + rate·τ` by ordinary least squares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    /// Standard error of the rate from the residual variance.
    pub stderr: f64,
    /// `rate ± t_{0.975, n−2}·stderr`.
    pub ci95: [f64; 2],
    pub points: usize,
}

impl DecayFit {
    /// True when `rate + k·stderr < 0`.
    pub fn negative_at(&self, k: f64) -> bool {
        self.rate + k * self.stderr < 0.0
    }
}

/// Two-sided 97.5% Student quantiles for 1..=30 degrees of freedom.
const T975: [f64; 30] = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160, 2.145, 2.131,
    2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
];

fn t975(dof: usize) -> f64 {
    if dof == 0 {
        f64::NAN
    } else if dof <= 30 {
        T975[dof - 1]
    } else {
        1.96
    }
}

pub fn fit_decay_rate(tau: &[f64], v: &[f64]) -> Result<DecayFit> {
    if tau.len() != v.len() {
        return Err(HarnessError::Fit(format!("{} times but {} values", tau.len(), v.len())));
    }
    let n = tau.len();
    if n < 4 {
        return Err(HarnessError::Fit(format!("need at least 4 points, got {n}")));
    }
    if let Some(bad) = v.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(HarnessError::Fit(format!("nonpositive value {bad}")));
    }
    if tau.iter().any(|t| !t.is_finite()) {
        return Err(HarnessError::Fit("nonfinite time".into()));
    }
    let y: Vec<f64> = v.iter().map(|x| x.ln()).collect();
    let nf = n as f64;
    let tm = tau.iter().sum::<f64>() / nf;
    let ym = y.iter().sum::<f64>() / nf;
    let sxx: f64 = tau.iter().map(|t| (t - tm) * (t - tm)).sum();
    if !(sxx > 0.0) {
        return Err(HarnessError::Fit("all times coincide".into()));
    }
    let sxy: f64 = tau.iter().zip(&y).map(|(t, y)| (t - tm) * (y - ym)).sum();
    let rate = sxy / sxx;
    let intercept = ym - rate * tm;
    let ssr: f64 = tau.iter().zip(&y).map(|(t, y)| (y - intercept - rate * t).powi(2)).sum();
    let stderr = (ssr / (nf - 2.0) / sxx).sqrt();
    let half = t975(n - 2) * stderr;
    Ok(DecayFit { rate, intercept, stderr, ci95: [rate - half, rate + half], points: n })
}
