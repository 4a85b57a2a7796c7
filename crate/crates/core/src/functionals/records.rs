//! Time-stamped diagnostics and the calibratable constants.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{MfclError, Result};

/// Mean and standard error over replicas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

impl Stat {
    /// A deterministic value (zero standard error).
    pub fn exact(v: f64) -> Self {
        Self { mean: v, stderr: 0.0, count: 1 }
    }

    /// Sample mean and `sd/√R` with the unbiased variance; summation in input order.
    pub fn from_samples(xs: &[f64]) -> Self {
        let r = xs.len();
        if r == 0 {
            return Self { mean: f64::NAN, stderr: f64::NAN, count: 0 };
        }
        let mean = crate::quad::kahan_sum(xs.iter().copied()) / r as f64;
        let stderr = if r > 1 {
            let var = crate::quad::kahan_sum(xs.iter().map(|x| (x - mean) * (x - mean)))
                / (r - 1) as f64;
            (var / r as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, count: r }
    }
}

/// Constants left unspecified by the theory, fitted by calibration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstantsConfig {
    /// `C_*`, entropy commutator constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_star: Option<f64>,
    /// `𝖢`, almost-positivity and modulated-energy commutator constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_frak: Option<f64>,
    /// `C₀` in the self-similar correction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    /// `C` in the Grönwall prefactors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_gron: Option<f64>,
    /// LSI constant of the modulated Gibbs measure, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_ls: Option<f64>,
    /// Free-form calibration provenance.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, String>,
}

impl ConstantsConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("C_star", self.c_star),
            ("C_frak", self.c_frak),
            ("C0", self.c0),
            ("C_gron", self.c_gron),
            ("C_LS", self.c_ls),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(MfclError::InvalidSpec(format!("constant {name} = {v}")));
                }
            }
        }
        Ok(())
    }

    pub fn c_star(&self) -> Result<f64> {
        self.c_star.ok_or(MfclError::UnsetConstant("C_star"))
    }

    pub fn c_frak(&self) -> Result<f64> {
        self.c_frak.ok_or(MfclError::UnsetConstant("C_frak"))
    }

    pub fn c0(&self) -> Result<f64> {
        self.c0.ok_or(MfclError::UnsetConstant("C0"))
    }

    pub fn c_gron(&self) -> Result<f64> {
        self.c_gron.ok_or(MfclError::UnsetConstant("C_gron"))
    }

    pub fn c_ls(&self) -> Result<f64> {
        self.c_ls.ok_or(MfclError::UnsetConstant("C_LS"))
    }
}

/// Functional values at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub run_id: String,
    pub checkpoint: usize,
    pub t: f64,
    pub tau: f64,
    pub values: BTreeMap<String, Stat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsConfig>,
}

impl DiagnosticsRecord {
    pub fn new(run_id: impl Into<String>, checkpoint: usize, t: f64, tau: f64) -> Self {
        Self {
            run_id: run_id.into(),
            checkpoint,
            t,
            tau,
            values: BTreeMap::new(),
            constants: None,
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, stat: Stat) {
        self.values.insert(name.into(), stat);
    }

    pub fn get(&self, name: &str) -> Option<&Stat> {
        self.values.get(name)
    }

    /// Every value finite, every standard error nonnegative.
    pub fn validate(&self) -> Result<()> {
        for (name, s) in &self.values {
            if !s.mean.is_finite() || !s.stderr.is_finite() || s.stderr < 0.0 {
                return Err(MfclError::NonFinite(format!("record value {name}")));
            }
        }
        if let Some(c) = &self.constants {
            c.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_of_samples() {
        let s = Stat::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.stderr - (5.0f64 / 12.0).sqrt() / 1.0).abs() < 1e-15 * 10.0);
        assert_eq!(Stat::from_samples(&[7.0]).stderr, 0.0);
    }

    #[test]
    fn unset_constants_error() {
        let c = ConstantsConfig::default();
        assert_eq!(c.c0(), Err(MfclError::UnsetConstant("C0")));
        let bad = ConstantsConfig { c_frak: Some(-1.0), ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
