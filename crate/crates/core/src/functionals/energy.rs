//! Modulated energy `F_N(X, μ)` and its self-similar form.

use crate::conv::{Convolver, KernelSet};
use crate::error::{MfclError, Result};
use crate::grid::{GridDensity, GridGeometry};
use crate::kernels::{g_radial, InteractionSpec};
use crate::particles::ParticleConfig;
use crate::quad::Kahan;

/// `g * μ` on the grid and the background self-energy `½∬ g μ μ`.
#[derive(Debug, Clone)]
pub struct BackgroundField {
    pub geom: GridGeometry,
    pub s: f64,
    pub potential: Vec<f64>,
    pub self_energy: f64,
}

impl BackgroundField {
    pub fn new(mu: &GridDensity, s: f64) -> Result<Self> {
        check_unit_mass(mu)?;
        let conv = Convolver::new(mu.geom, s, KernelSet::POTENTIAL);
        Ok(Self::with_convolver(mu, &conv))
    }

    pub fn with_convolver(mu: &GridDensity, conv: &Convolver) -> Self {
        let potential = conv.potential(&mu.values);
        let vol = mu.geom.cell_volume();
        let self_energy = 0.5
            * vol
            * crate::quad::kahan_sum(mu.values.iter().zip(&potential).map(|(m, p)| m * p));
        Self { geom: mu.geom, s: conv.s, potential, self_energy }
    }

    /// `(g * μ)(x)` by cubic interpolation.
    pub fn at(&self, x: &[f64]) -> Result<f64> {
        self.geom.interpolate(&self.potential, x)
    }
}

fn check_unit_mass(mu: &GridDensity) -> Result<()> {
    let m = mu.mass();
    if (m - 1.0).abs() > 1e-8 {
        return Err(MfclError::Invariant(format!("background mass {m} is not 1")));
    }
    Ok(())
}

/// `(1/2N²) Σ_{i≠j} g(x_i − x_j)`, compensated, in index order.
pub fn pair_energy(s: f64, x: &ParticleConfig) -> Result<f64> {
    let n = x.n();
    let d = x.d;
    let p = &x.positions;
    let mut acc = Kahan::default();
    for i in 0..n {
        for j in i + 1..n {
            let mut r2 = 0.0;
            for a in 0..d {
                let z = p[i * d + a] - p[j * d + a];
                r2 += z * z;
            }
            if r2 == 0.0 {
                return Err(MfclError::Coincident(i, j));
            }
            acc.add(g_radial(s, r2.sqrt()));
        }
    }
    Ok(acc.value() / (n * n) as f64)
}

/// `F_N(X, μ)` against a precomputed background.
pub fn modulated_energy_with(bg: &BackgroundField, x: &ParticleConfig) -> Result<f64> {
    if x.d != bg.geom.d {
        return Err(MfclError::Domain("particle dimension differs from grid".into()));
    }
    let n = x.n() as f64;
    let pair = pair_energy(bg.s, x)?;
    let mut cross = Kahan::default();
    for p in x.positions.chunks_exact(x.d) {
        cross.add(bg.at(p)?);
    }
    Ok(pair - cross.value() / n + bg.self_energy)
}

/// `F_N(X, μ) = (1/2N²) Σ_{i≠j} g(x_i − x_j) − (1/N) Σ_i (g*μ)(x_i) + ½∬ g μ μ`.
pub fn modulated_energy(spec: &InteractionSpec, x: &ParticleConfig, mu: &GridDensity) -> Result<f64> {
    let bg = BackgroundField::new(mu, spec.s)?;
    modulated_energy_with(&bg, x)
}

/// `(e^{-sτ/2} F_N(Ξ, μ̄), e^{-sτ/2} F_N(Ξ, μ̄) + τ/(4N) 1_{s=0})`.
pub fn modulated_energy_ss(
    spec: &InteractionSpec,
    tau: f64,
    xi: &ParticleConfig,
    mu_bar: &GridDensity,
) -> Result<(f64, f64)> {
    if tau < 0.0 {
        return Err(MfclError::Domain(format!("tau = {tau}")));
    }
    let bare = spec.tau_factor(tau) * modulated_energy(spec, xi, mu_bar)?;
    Ok((bare, bare + log_shift(spec, tau, xi.n())))
}

/// `τ/(4N) 1_{s=0}`.
pub fn log_shift(spec: &InteractionSpec, tau: f64, n: usize) -> f64 {
    if spec.is_log() {
        tau / (4.0 * n as f64)
    } else {
        0.0
    }
}

/// `E_N = H_N/β + E[F_N]`.
pub fn modulated_free_energy(spec: &InteractionSpec, h_n: f64, mean_f: f64) -> Result<f64> {
    if spec.is_zero_temperature() {
        return Err(MfclError::ZeroTemperature("modulated free energy"));
    }
    Ok(h_n / spec.beta + mean_f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_particles_against_uniform_background() {
        // Pair term 0, cross term −1, background 3/4.
        let spec = InteractionSpec::gradient(1, 0.0, 1.0).unwrap();
        let geom = GridGeometry::new(1, 2000, 2.0).unwrap();
        let mut mu = GridDensity::from_fn(geom, |x| {
            if x[0] > 1e-9 && x[0] < 1.0 - 1e-9 {
                1.0
            } else if x[0].abs() < 1e-9 || (x[0] - 1.0).abs() < 1e-9 {
                0.5
            } else {
                0.0
            }
        })
        .unwrap();
        mu.normalize().unwrap();
        let x = ParticleConfig::new(1, vec![0.0, 1.0]).unwrap();
        let f = modulated_energy(&spec, &x, &mu).unwrap();
        assert!((f + 0.25).abs() < 2e-3, "{f}");
    }

    #[test]
    fn self_similar_shift_and_scaling() {
        let geom = GridGeometry::new(1, 256, 8.0).unwrap();
        let mu = GridDensity::gaussian(geom, &[0.0], 1.0).unwrap();
        let x = ParticleConfig::new(1, vec![-0.5, 0.2, 1.1]).unwrap();
        let log = InteractionSpec::gradient(1, 0.0, 1.0).unwrap();
        let (bare, shifted) = modulated_energy_ss(&log, 1.3, &x, &mu).unwrap();
        assert!((shifted - bare - 1.3 / 12.0).abs() < 1e-15);
        let riesz = InteractionSpec::gradient(2, 1.0, 1.0).unwrap();
        let g2 = GridGeometry::new(2, 64, 6.0).unwrap();
        let mu2 = GridDensity::gaussian(g2, &[0.0, 0.0], 1.0).unwrap();
        let x2 = ParticleConfig::new(2, vec![0.1, 0.2, -0.4, 0.3]).unwrap();
        let full = modulated_energy(&riesz, &x2, &mu2).unwrap();
        let (bare, shifted) = modulated_energy_ss(&riesz, 2.0 * 2f64.ln(), &x2, &mu2).unwrap();
        assert!((bare - 0.5 * full).abs() < 1e-14 && bare == shifted);
    }

    #[test]
    fn relabeling_is_exact() {
        let spec = InteractionSpec::gradient(2, 0.5, 1.0).unwrap();
        let geom = GridGeometry::new(2, 48, 5.0).unwrap();
        let mu = GridDensity::gaussian(geom, &[0.0, 0.0], 1.0).unwrap();
        let bg = BackgroundField::new(&mu, spec.s).unwrap();
        let a = ParticleConfig::new(2, vec![0.1, 0.2, -0.4, 0.3, 1.0, -1.0]).unwrap();
        let b = ParticleConfig::new(2, vec![1.0, -1.0, 0.1, 0.2, -0.4, 0.3]).unwrap();
        let fa = modulated_energy_with(&bg, &a).unwrap();
        let fb = modulated_energy_with(&bg, &b).unwrap();
        assert!((fa - fb).abs() < 1e-15);
        let c = ParticleConfig::new(2, vec![0.1, 0.2, 0.1, 0.2]).unwrap();
        assert_eq!(modulated_energy_with(&bg, &c), Err(MfclError::Coincident(0, 1)));
    }
}
