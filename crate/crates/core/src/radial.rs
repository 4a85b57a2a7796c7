//! Radial profiles on cell-centred shells.
//!
//! Cell `i` covers `[i h, (i+1) h]` with its value stored at `r_i = (i + 1/2) h`.
//! Shell volumes are exact, so the mass of a piecewise-constant profile is
//! exact as well.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{MfclError, Result};

/// Surface area of the unit sphere in `R^d`.
pub fn unit_sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => {
            // 2 π^{d/2} / Γ(d/2) by the recursion |S^{d-1}| = 2π/(d-2) |S^{d-3}|.
            2.0 * PI / (d as f64 - 2.0) * unit_sphere_area(d - 2)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub d: usize,
    pub n: usize,
    pub radius: f64,
}

impl RadialGrid {
    pub fn new(d: usize, n: usize, radius: f64) -> Result<Self> {
        if d < 2 {
            return Err(MfclError::Unsupported("radial profiles need d >= 2".into()));
        }
        if n < 4 || !(radius > 0.0 && radius.is_finite()) {
            return Err(MfclError::Domain(format!("radial grid n = {n}, radius = {radius}")));
        }
        Ok(Self { d, n, radius })
    }

    pub fn h(&self) -> f64 {
        self.radius / self.n as f64
    }

    pub fn r(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h()
    }

    pub fn inner(&self, i: usize) -> f64 {
        i as f64 * self.h()
    }

    pub fn outer(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.h()
    }

    pub fn shell_volume(&self, i: usize) -> f64 {
        let d = self.d as i32;
        unit_sphere_area(self.d) / self.d as f64 * (self.outer(i).powi(d) - self.inner(i).powi(d))
    }

    /// Area of the sphere of radius `r`.
    pub fn face_area(&self, r: f64) -> f64 {
        unit_sphere_area(self.d) * r.powi(self.d as i32 - 1)
    }

    pub fn volumes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.shell_volume(i)).collect()
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.r(i)).collect()
    }
}

/// A radially symmetric density `μ(|x|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialDensity {
    pub grid: RadialGrid,
    pub values: Vec<f64>,
}

impl RadialDensity {
    pub fn new(grid: RadialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(MfclError::Domain("radial profile length mismatch".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(MfclError::Invariant(format!("density value {v}")));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: RadialGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, (0..grid.n).map(|i| f(grid.r(i))).collect())
    }

    /// Centred Gaussian with per-coordinate variance `var`, normalized on the shells.
    pub fn gaussian(grid: RadialGrid, var: f64) -> Result<Self> {
        let mut g = Self::from_fn(grid, |r| (-r * r / (2.0 * var)).exp())?;
        g.normalize()?;
        Ok(g)
    }

    pub fn mass(&self) -> f64 {
        crate::quad::kahan_sum(
            self.values.iter().enumerate().map(|(i, v)| v * self.grid.shell_volume(i)),
        )
    }

    pub fn normalize(&mut self) -> Result<()> {
        let m = self.mass();
        if !(m > 0.0 && m.is_finite()) {
            return Err(MfclError::Invariant(format!("cannot normalize mass {m}")));
        }
        self.values.iter_mut().for_each(|v| *v /= m);
        Ok(())
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.sup();
        }
        let s: f64 = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| v.powf(p) * self.grid.shell_volume(i))
            .sum();
        s.powf(1.0 / p)
    }

    pub fn l1_distance(&self, other: &RadialDensity) -> Result<f64> {
        if self.grid != other.grid {
            return Err(MfclError::Domain("radial profiles live on different grids".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .enumerate()
            .map(|(i, (a, b))| (a - b).abs() * self.grid.shell_volume(i))
            .sum())
    }

    pub fn second_moment(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let (a, b) = (self.grid.inner(i), self.grid.outer(i));
                let d = self.grid.d as i32;
                v * unit_sphere_area(self.grid.d) * (b.powi(d + 2) - a.powi(d + 2)) / (d + 2) as f64
            })
            .sum()
    }

    /// Mass in the outermost shell.
    pub fn boundary_mass(&self) -> f64 {
        let i = self.grid.n - 1;
        self.values[i] * self.grid.shell_volume(i)
    }
}

/// Potential `g * μ` at the shell centres for the Coulomb cases `s = d − 2`,
/// computed exactly for the piecewise-constant profile by the shell theorem.
pub fn coulomb_potential(mu: &RadialDensity, s: f64) -> Result<Vec<f64>> {
    let grid = mu.grid;
    let d = grid.d;
    if s != d as f64 - 2.0 {
        return Err(MfclError::Unsupported(format!(
            "shell-theorem potential needs s = d - 2, got d = {d}, s = {s}"
        )));
    }
    let area = unit_sphere_area(d);
    let n = grid.n;
    // Outer integrand antiderivative P(ρ) = ∫ area ρ^{d-1} g(ρ) dρ and the
    // inner mass antiderivative Q(ρ) = area ρ^d / d.
    let p_anti = |rho: f64| -> f64 {
        if d == 2 {
            if rho == 0.0 {
                0.0
            } else {
                -area * (rho * rho * rho.ln() / 2.0 - rho * rho / 4.0)
            }
        } else {
            // g = ρ^{-s}/s with s = d − 2: area ρ^{d-1} ρ^{2-d}/s = area ρ / s.
            area * rho * rho / (2.0 * s)
        }
    };
    let q_anti = |rho: f64| area * rho.powi(d as i32) / d as f64;
    let g = |r: f64| crate::kernels::g_radial(s, r);

    // Outer contributions: suffix sums of full shells.
    let mut suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + mu.values[i] * (p_anti(grid.outer(i)) - p_anti(grid.inner(i)));
    }
    let mut inner_mass = 0.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let r = grid.r(i);
        let v = mu.values[i];
        let m_in = inner_mass + v * (q_anti(r) - q_anti(grid.inner(i)));
        let outer = v * (p_anti(grid.outer(i)) - p_anti(r)) + suffix[i + 1];
        out.push(m_in * g(r) + outer);
        inner_mass += v * grid.shell_volume(i);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shell_volumes_sum_to_ball() {
        let g = RadialGrid::new(3, 50, 2.0).unwrap();
        let total: f64 = g.volumes().iter().sum();
        assert!((total - 4.0 / 3.0 * PI * 8.0).abs() < 1e-12);
        assert!((unit_sphere_area(4) - 2.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn gaussian_second_moment() {
        let g = RadialGrid::new(2, 4000, 12.0).unwrap();
        let mu = RadialDensity::gaussian(g, 1.5).unwrap();
        assert!((mu.mass() - 1.0).abs() < 1e-13);
        assert!((mu.second_moment() - 3.0).abs() < 1e-5);
    }

    #[test]
    fn coulomb_potential_of_uniform_ball() {
        // Uniform ball of radius 1 in 3D with g = 1/r: Φ(r) = (3 − r²)/2 inside.
        let g = RadialGrid::new(3, 200, 2.0).unwrap();
        let mut mu = RadialDensity::from_fn(g, |r| if r < 1.0 { 1.0 } else { 0.0 }).unwrap();
        mu.normalize().unwrap();
        let phi = coulomb_potential(&mu, 1.0).unwrap();
        for i in [0, 10, 50, 99] {
            let r = g.r(i);
            assert!((phi[i] - (3.0 - r * r) / 2.0).abs() < 1e-12, "{i}");
        }
        for i in [100, 150, 199] {
            assert!((phi[i] - 1.0 / g.r(i)).abs() < 1e-12);
        }
    }

    #[test]
    fn log_potential_outside_disc() {
        let g = RadialGrid::new(2, 100, 3.0).unwrap();
        let mut mu = RadialDensity::from_fn(g, |r| if r < 1.0 { 1.0 + r } else { 0.0 }).unwrap();
        mu.normalize().unwrap();
        let phi = coulomb_potential(&mu, 0.0).unwrap();
        for i in [40, 70, 99] {
            assert!((phi[i] + g.r(i).ln()).abs() < 1e-12);
        }
    }
}
