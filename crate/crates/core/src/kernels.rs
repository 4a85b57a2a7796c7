//! Log/Riesz interaction potential and the drift field `k = M∇g`.
//!
//! `g(x) = -log|x|` for `s = 0` and `|x|^{-s}/s` for `0 < s < d`. The
//! renormalized potential in self-similar time is `g_τ = e^{-sτ/2} g`.

use serde::{Deserialize, Serialize};

use crate::error::{MfclError, Result};

/// Drift matrix selector.
#[derive(Debug, Clone, PartialEq)]
pub enum Drift {
    /// `M` antisymmetric, stored dense row-major.
    Antisymmetric(Vec<f64>),
    /// `M = -I`.
    Gradient,
    /// `M = A - c·I` with `A` antisymmetric. Not exercised by the experiments.
    Mixed { antisym: Vec<f64>, gradient_weight: f64 },
}

/// Dimension, Riesz exponent, drift type and inverse temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSpec {
    pub d: usize,
    pub s: f64,
    pub drift: Drift,
    /// Inverse temperature; `f64::INFINITY` means zero temperature.
    pub beta: f64,
}

fn check_antisymmetric(d: usize, m: &[f64]) -> Result<()> {
    if m.len() != d * d {
        return Err(MfclError::InvalidSpec(format!(
            "drift matrix has {} entries, expected {}",
            m.len(),
            d * d
        )));
    }
    for i in 0..d {
        for j in 0..d {
            if m[i * d + j] + m[j * d + i] != 0.0 {
                return Err(MfclError::InvalidSpec(format!(
                    "M[{i}][{j}] + M[{j}][{i}] != 0"
                )));
            }
        }
    }
    Ok(())
}

impl InteractionSpec {
    pub fn new(d: usize, s: f64, drift: Drift, beta: f64) -> Result<Self> {
        if d == 0 {
            return Err(MfclError::InvalidSpec("d must be at least 1".into()));
        }
        if !(s >= 0.0 && s < d as f64) {
            return Err(MfclError::InvalidSpec(format!("s = {s} outside [0, {d})")));
        }
        if beta.is_nan() || beta <= 0.0 {
            return Err(MfclError::InvalidSpec(format!("beta = {beta} must be positive")));
        }
        match &drift {
            Drift::Antisymmetric(m) => check_antisymmetric(d, m)?,
            Drift::Mixed { antisym, gradient_weight } => {
                check_antisymmetric(d, antisym)?;
                if !gradient_weight.is_finite() {
                    return Err(MfclError::InvalidSpec("gradient weight must be finite".into()));
                }
            }
            Drift::Gradient => {}
        }
        Ok(Self { d, s, drift, beta })
    }

    pub fn gradient(d: usize, s: f64, beta: f64) -> Result<Self> {
        Self::new(d, s, Drift::Gradient, beta)
    }

    pub fn antisymmetric(d: usize, s: f64, m: Vec<f64>, beta: f64) -> Result<Self> {
        Self::new(d, s, Drift::Antisymmetric(m), beta)
    }

    /// Planar rotation generator `[[0,1],[-1,0]]` embedded in the first two axes.
    pub fn rotation_generator(d: usize) -> Vec<f64> {
        let mut m = vec![0.0; d * d];
        if d >= 2 {
            m[1] = 1.0;
            m[d] = -1.0;
        }
        m
    }

    pub fn is_log(&self) -> bool {
        self.s == 0.0
    }

    pub fn is_zero_temperature(&self) -> bool {
        self.beta.is_infinite()
    }

    /// Diffusion coefficient `1/β` (zero at zero temperature).
    pub fn diffusion(&self) -> f64 {
        if self.is_zero_temperature() {
            0.0
        } else {
            1.0 / self.beta
        }
    }

    pub fn is_antisymmetric(&self) -> bool {
        matches!(self.drift, Drift::Antisymmetric(_))
    }

    pub fn is_gradient(&self) -> bool {
        matches!(self.drift, Drift::Gradient)
    }

    /// Dense drift matrix, row-major.
    pub fn drift_matrix(&self) -> Vec<f64> {
        let d = self.d;
        match &self.drift {
            Drift::Antisymmetric(m) => m.clone(),
            Drift::Gradient => {
                let mut m = vec![0.0; d * d];
                for i in 0..d {
                    m[i * d + i] = -1.0;
                }
                m
            }
            Drift::Mixed { antisym, gradient_weight } => {
                let mut m = antisym.clone();
                for i in 0..d {
                    m[i * d + i] -= gradient_weight;
                }
                m
            }
        }
    }

    /// `e^{-sτ/2}`.
    pub fn tau_factor(&self, tau: f64) -> f64 {
        if self.s == 0.0 {
            return 1.0;
        }
        (-self.s * tau / 2.0).exp()
    }

    /// True when `s ≥ d − 2` (Coulomb or super-Coulomb range).
    pub fn is_super_coulomb(&self) -> bool {
        self.s >= self.d as f64 - 2.0
    }
}

/// `g` as a function of the distance `r > 0`.
#[inline]
pub fn g_radial(s: f64, r: f64) -> f64 {
    if s == 0.0 {
        -r.ln()
    } else {
        r.powf(-s) / s
    }
}

/// `|x|^{-s-2}` from `|x|²`; `∇g(x) = -x · grad_coefficient`.
#[inline]
pub fn grad_coefficient(s: f64, r2: f64) -> f64 {
    if s == 0.0 {
        1.0 / r2
    } else {
        r2.powf(-(s + 2.0) / 2.0)
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn check_point(spec: &InteractionSpec, x: &[f64]) -> Result<f64> {
    if x.len() != spec.d {
        return Err(MfclError::Domain(format!(
            "point has dimension {}, spec has d = {}",
            x.len(),
            spec.d
        )));
    }
    let r2 = norm2(x);
    if r2 == 0.0 {
        return Err(MfclError::Singular);
    }
    Ok(r2)
}

/// `g(x)`.
pub fn potential(spec: &InteractionSpec, x: &[f64]) -> Result<f64> {
    let r2 = check_point(spec, x)?;
    Ok(g_radial(spec.s, r2.sqrt()))
}

/// `g_τ(x) = e^{-sτ/2} g(x)`.
pub fn potential_renormalized(spec: &InteractionSpec, tau: f64, x: &[f64]) -> Result<f64> {
    if tau < 0.0 {
        return Err(MfclError::Domain(format!("tau = {tau} is negative")));
    }
    Ok(spec.tau_factor(tau) * potential(spec, x)?)
}

/// `∇g(x) = -x |x|^{-s-2}`.
pub fn grad_potential(spec: &InteractionSpec, x: &[f64]) -> Result<Vec<f64>> {
    let r2 = check_point(spec, x)?;
    let c = grad_coefficient(spec.s, r2);
    Ok(x.iter().map(|v| -v * c).collect())
}

/// `Δg(x) = -(d - s - 2) |x|^{-s-2}`.
pub fn laplacian_potential(spec: &InteractionSpec, x: &[f64]) -> Result<f64> {
    let r2 = check_point(spec, x)?;
    Ok(-(spec.d as f64 - spec.s - 2.0) * grad_coefficient(spec.s, r2))
}

/// `k_τ(x) = e^{-sτ/2} M ∇g(x)`.
pub fn drift_field(spec: &InteractionSpec, tau: f64, x: &[f64]) -> Result<Vec<f64>> {
    if tau < 0.0 {
        return Err(MfclError::Domain(format!("tau = {tau} is negative")));
    }
    let grad = grad_potential(spec, x)?;
    let f = spec.tau_factor(tau);
    Ok(apply_drift(spec, &grad).into_iter().map(|v| v * f).collect())
}

/// `M v` without forming `M` for the pure cases.
pub fn apply_drift(spec: &InteractionSpec, v: &[f64]) -> Vec<f64> {
    let d = spec.d;
    match &spec.drift {
        Drift::Gradient => v.iter().map(|x| -x).collect(),
        Drift::Antisymmetric(m) => mat_vec(m, d, v),
        Drift::Mixed { antisym, gradient_weight } => mat_vec(antisym, d, v)
            .into_iter()
            .zip(v)
            .map(|(a, x)| a - gradient_weight * x)
            .collect(),
    }
}

pub(crate) fn mat_vec(m: &[f64], d: usize, v: &[f64]) -> Vec<f64> {
    (0..d)
        .map(|i| (0..d).map(|j| m[i * d + j] * v[j]).sum())
        .collect()
}

/// Serializable form of [`InteractionSpec`] used in run configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecConfig {
    pub d: usize,
    pub s: f64,
    pub drift: String,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient_weight: Option<f64>,
    pub beta: BetaValue,
}

/// Inverse temperature as written in a config file: a number or `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaValue {
    Finite(f64),
    Symbol(String),
}

impl BetaValue {
    pub fn value(&self) -> Result<f64> {
        match self {
            BetaValue::Finite(b) => Ok(*b),
            BetaValue::Symbol(s) if s.eq_ignore_ascii_case("inf") => Ok(f64::INFINITY),
            BetaValue::Symbol(s) => Err(MfclError::InvalidSpec(format!("beta = {s:?}"))),
        }
    }

    pub fn from_f64(beta: f64) -> Self {
        if beta.is_infinite() {
            BetaValue::Symbol("inf".into())
        } else {
            BetaValue::Finite(beta)
        }
    }
}

impl TryFrom<SpecConfig> for InteractionSpec {
    type Error = MfclError;

    fn try_from(c: SpecConfig) -> Result<Self> {
        let beta = c.beta.value()?;
        let drift = match c.drift.as_str() {
            "gradient" => Drift::Gradient,
            "antisymmetric" => Drift::Antisymmetric(c.m.ok_or_else(|| {
                MfclError::InvalidSpec("antisymmetric drift requires M".into())
            })?),
            "mixed" => Drift::Mixed {
                antisym: c
                    .m
                    .ok_or_else(|| MfclError::InvalidSpec("mixed drift requires M".into()))?,
                gradient_weight: c.gradient_weight.unwrap_or(1.0),
            },
            other => return Err(MfclError::InvalidSpec(format!("unknown drift {other:?}"))),
        };
        InteractionSpec::new(c.d, c.s, drift, beta)
    }
}

impl From<&InteractionSpec> for SpecConfig {
    fn from(spec: &InteractionSpec) -> Self {
        let (drift, m, gradient_weight) = match &spec.drift {
            Drift::Gradient => ("gradient", None, None),
            Drift::Antisymmetric(m) => ("antisymmetric", Some(m.clone()), None),
            Drift::Mixed { antisym, gradient_weight } => {
                ("mixed", Some(antisym.clone()), Some(*gradient_weight))
            }
        };
        SpecConfig {
            d: spec.d,
            s: spec.s,
            drift: drift.into(),
            m,
            gradient_weight,
            beta: BetaValue::from_f64(spec.beta),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grad(d: usize, s: f64) -> InteractionSpec {
        InteractionSpec::gradient(d, s, 1.0).unwrap()
    }

    #[test]
    fn potential_examples() {
        assert_eq!(potential(&grad(2, 0.0), &[1.0, 0.0]).unwrap(), 0.0);
        assert!((potential(&grad(3, 1.0), &[2.0, 0.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        let e = std::f64::consts::E;
        assert!((potential(&grad(2, 0.0), &[e, 0.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(potential(&grad(2, 0.0), &[0.0, 0.0]), Err(MfclError::Singular));
    }

    #[test]
    fn renormalized_examples() {
        let sp = grad(3, 1.0);
        let v = potential_renormalized(&sp, 2.0 * 2f64.ln(), &[2.0, 0.0, 0.0]).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
        assert_eq!(potential_renormalized(&grad(2, 0.0), 7.0, &[1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn gradient_and_laplacian_examples() {
        assert_eq!(grad_potential(&grad(2, 0.0), &[1.0, 0.0]).unwrap(), vec![-1.0, 0.0]);
        let g = grad_potential(&grad(3, 1.0), &[0.0, 2.0, 0.0]).unwrap();
        assert!((g[1] + 0.25).abs() < 1e-15 && g[0] == 0.0 && g[2] == 0.0);
        assert_eq!(laplacian_potential(&grad(2, 0.0), &[0.3, -2.0]).unwrap(), 0.0);
        assert!((laplacian_potential(&grad(3, 0.0), &[0.0, 1.0, 0.0]).unwrap() + 1.0).abs() < 1e-15);
        let lap = laplacian_potential(&grad(1, 0.0), &[0.5]).unwrap();
        let h = 1e-4;
        let f = |x: f64| -x.abs().ln();
        let fd = (f(0.5 + h) - 2.0 * f(0.5) + f(0.5 - h)) / (h * h);
        assert!((lap - 4.0).abs() < 1e-12 && (fd - lap).abs() < 1e-5);
    }

    #[test]
    fn drift_examples() {
        assert_eq!(drift_field(&grad(2, 0.0), 0.0, &[1.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        let rot = InteractionSpec::antisymmetric(2, 0.0, vec![0.0, 1.0, -1.0, 0.0], 1.0).unwrap();
        assert_eq!(drift_field(&rot, 0.0, &[1.0, 0.0]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn spec_validation() {
        assert!(InteractionSpec::gradient(2, 2.0, 1.0).is_err());
        assert!(InteractionSpec::gradient(2, -0.1, 1.0).is_err());
        assert!(InteractionSpec::gradient(2, 0.0, 0.0).is_err());
        assert!(InteractionSpec::antisymmetric(2, 0.0, vec![0.0, 1.0, 1.0, 0.0], 1.0).is_err());
        assert!(InteractionSpec::gradient(2, 0.0, f64::INFINITY).unwrap().is_zero_temperature());
    }

    #[test]
    fn spec_config_roundtrip() {
        let spec = InteractionSpec::antisymmetric(2, 0.5, vec![0.0, 2.0, -2.0, 0.0], f64::INFINITY)
            .unwrap();
        let c = SpecConfig::from(&spec);
        assert_eq!(c.beta, BetaValue::Symbol("inf".into()));
        assert_eq!(InteractionSpec::try_from(c).unwrap(), spec);
    }
}
