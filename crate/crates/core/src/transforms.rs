//! Self-similar change of variables `ξ = x/√(t+1)`, `τ = log(t+1)`.

use serde::{Deserialize, Serialize};

use crate::error::{MfclError, Result};
use crate::functionals::energy::modulated_energy;
use crate::functionals::entropy::{relative_entropy_gaussian, GaussianProduct};
use crate::grid::{GridDensity, GridGeometry};
use crate::kernels::InteractionSpec;
use crate::particles::ParticleConfig;

/// Time frame of a PDE state or particle ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coords {
    Original,
    SelfSimilar,
}

/// Matched original and self-similar times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordinatePair {
    pub t: f64,
    pub tau: f64,
}

impl CoordinatePair {
    pub fn from_t(t: f64) -> Result<Self> {
        check_time(t)?;
        Ok(Self { t, tau: t.ln_1p() })
    }

    pub fn from_tau(tau: f64) -> Result<Self> {
        check_time(tau)?;
        Ok(Self { t: tau.exp_m1(), tau })
    }

    /// Pair for a time expressed in the given frame.
    pub fn from_frame(coords: Coords, time: f64) -> Result<Self> {
        match coords {
            Coords::Original => Self::from_t(time),
            Coords::SelfSimilar => Self::from_tau(time),
        }
    }

    /// Spatial scale `√(t+1) = e^{τ/2}`.
    pub fn scale(&self) -> f64 {
        (0.5 * self.tau).exp()
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(MfclError::Domain(format!("time {t} must be finite and nonnegative")));
    }
    Ok(())
}

/// `(t, x) ↦ (τ, ξ)`.
pub fn to_self_similar(t: f64, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let c = CoordinatePair::from_t(t)?;
    let inv = 1.0 / (t + 1.0).sqrt();
    Ok((c.tau, x.iter().map(|v| v * inv).collect()))
}

/// `(τ, ξ) ↦ (t, x)`.
pub fn from_self_similar(tau: f64, xi: &[f64]) -> Result<(f64, Vec<f64>)> {
    let c = CoordinatePair::from_tau(tau)?;
    let s = c.scale();
    Ok((c.t, xi.iter().map(|v| v * s).collect()))
}

/// `μ̄(ξ) = (t+1)^{d/2} μ(√(t+1) ξ)` realized by shrinking the grid.
pub fn push_density(mu: &GridDensity, t: f64) -> Result<GridDensity> {
    check_time(t)?;
    check_unit_mass(mu)?;
    if t == 0.0 {
        return Ok(mu.clone());
    }
    let lambda = 1.0 / (t + 1.0).sqrt();
    let geom = mu.geom.scaled(lambda);
    let amp = (t + 1.0).powf(mu.geom.d as f64 / 2.0);
    GridDensity::new(geom, mu.values.iter().map(|v| v * amp).collect())
}

/// Inverse of [`push_density`].
pub fn pull_density(mu_bar: &GridDensity, t: f64) -> Result<GridDensity> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(mu_bar.clone());
    }
    let lambda = (t + 1.0).sqrt();
    let geom = mu_bar.geom.scaled(lambda);
    let amp = (t + 1.0).powf(-(mu_bar.geom.d as f64) / 2.0);
    GridDensity::new(geom, mu_bar.values.iter().map(|v| v * amp).collect())
}

/// [`push_density`] followed by cubic re-sampling onto `target`.
pub fn push_density_onto(mu: &GridDensity, t: f64, target: GridGeometry) -> Result<GridDensity> {
    push_density(mu, t)?.resample(target)
}

fn check_unit_mass(mu: &GridDensity) -> Result<()> {
    let m = mu.mass();
    if (m - 1.0).abs() > 1e-10 {
        return Err(MfclError::Invariant(format!("density mass {m} is not 1")));
    }
    Ok(())
}

/// `Ξ_N = X_N / √(t+1)`.
pub fn push_particles(x: &ParticleConfig, t: f64) -> Result<ParticleConfig> {
    check_time(t)?;
    let inv = 1.0 / (t + 1.0).sqrt();
    ParticleConfig::new(x.d, x.positions.iter().map(|v| v * inv).collect())
}

/// `X_N = √(t+1) Ξ_N`.
pub fn pull_particles(xi: &ParticleConfig, t: f64) -> Result<ParticleConfig> {
    check_time(t)?;
    let s = (t + 1.0).sqrt();
    ParticleConfig::new(xi.d, xi.positions.iter().map(|v| v * s).collect())
}

/// Pushes a product-Gaussian law in `R^{dN}` to self-similar variables at time `τ`.
pub fn push_gaussian(law: &GaussianProduct, tau: f64) -> Result<GaussianProduct> {
    check_time(tau)?;
    let lambda = (-0.5 * tau).exp();
    GaussianProduct::new(
        law.means.iter().map(|m| m * lambda).collect(),
        law.variances.iter().map(|v| v * lambda * lambda).collect(),
    )
}

/// `|H_N(f|g) − H_N(f̄|ḡ)|` for product-Gaussian laws with `N` particles.
pub fn check_entropy_invariance(
    f: &GaussianProduct,
    g: &GaussianProduct,
    n: usize,
    tau: f64,
) -> Result<f64> {
    let lhs = relative_entropy_gaussian(f, g, n)?;
    let rhs = relative_entropy_gaussian(&push_gaussian(f, tau)?, &push_gaussian(g, tau)?, n)?;
    Ok((lhs - rhs).abs())
}

/// `|F_N(X, μ) − e^{-sτ/2} F_N(Ξ, μ̄) − (τ/4N) 1_{s=0}|` with `t = e^τ − 1`.
pub fn check_energy_scaling(
    spec: &InteractionSpec,
    x: &ParticleConfig,
    mu: &GridDensity,
    tau: f64,
) -> Result<f64> {
    let c = CoordinatePair::from_tau(tau)?;
    let lhs = modulated_energy(spec, x, mu)?;
    let xi = push_particles(x, c.t)?;
    let mu_bar = push_density(mu, c.t)?;
    let rhs = spec.tau_factor(tau) * modulated_energy(spec, &xi, &mu_bar)?;
    let shift = if spec.is_log() { tau / (4.0 * x.n() as f64) } else { 0.0 };
    Ok((lhs - rhs - shift).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinate_examples() {
        let (tau, xi) = to_self_similar(0.0, &[1.5, -2.0]).unwrap();
        assert_eq!(tau, 0.0);
        assert_eq!(xi, vec![1.5, -2.0]);
        let (tau, xi) = to_self_similar(3.0, &[2.0, 0.0]).unwrap();
        assert!((tau - 4f64.ln()).abs() < 1e-15);
        assert!((xi[0] - 1.0).abs() < 1e-15 && xi[1] == 0.0);
        assert!(to_self_similar(-0.1, &[0.0]).is_err());
    }

    #[test]
    fn round_trip_times() {
        for t in [0.0, 1e-6, 0.3, 7.0, 1e3] {
            let c = CoordinatePair::from_t(t).unwrap();
            let back = CoordinatePair::from_tau(c.tau).unwrap();
            assert!((back.t - t).abs() <= 1e-14 * t.max(1e-300));
        }
    }

    #[test]
    fn gaussian_push_matches_closed_form() {
        let geom = GridGeometry::new(1, 400, 12.0).unwrap();
        let var = 1.7;
        let mu = GridDensity::gaussian(geom, &[0.0], var).unwrap();
        let t = 2.0;
        let pushed = push_density(&mu, t).unwrap();
        assert!((pushed.mass() - 1.0).abs() < 1e-12);
        assert!((pushed.geom.extent - 12.0 / 3f64.sqrt()).abs() < 1e-14);
        let v = var / (t + 1.0);
        for i in [100, 200, 250] {
            let x = pushed.geom.coord(i);
            let exact = (-x * x / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
            assert!((pushed.values[i] - exact).abs() < 1e-10);
        }
        // Original amplitude × (t+1)^{d/2}.
        assert!((pushed.values[200] - 3f64.sqrt() * mu.values[200]).abs() < 1e-14);
    }

    #[test]
    fn pushed_particles_scale_distances() {
        let x = ParticleConfig::new(2, vec![2.0, 2.0, -1.0, 0.5]).unwrap();
        let xi = push_particles(&x, 3.0).unwrap();
        assert_eq!(&xi.positions[..2], &[1.0, 1.0]);
        let back = pull_particles(&xi, 3.0).unwrap();
        assert_eq!(back.positions, x.positions);
    }
}
