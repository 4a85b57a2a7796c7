//! Uniform tensor grids and sampled densities.
//!
//! Nodes sit at `x_i = -L + i h` with `h = 2L/n`, `i = 0..n`, along each axis.
//! Flattened indices put the last axis contiguous.

use serde::{Deserialize, Serialize};

use crate::error::{MfclError, Result};

/// Geometry of a cubic uniform grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub d: usize,
    pub n: usize,
    pub extent: f64,
}

impl GridGeometry {
    pub fn new(d: usize, n: usize, extent: f64) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(MfclError::Unsupported(format!("grids in dimension {d}")));
        }
        if n < 4 {
            return Err(MfclError::Domain(format!("n = {n} is below 4")));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(MfclError::Domain(format!("extent = {extent}")));
        }
        Ok(Self { d, n, extent })
    }

    pub fn h(&self) -> f64 {
        2.0 * self.extent / self.n as f64
    }

    /// Cell volume `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.extent + i as f64 * self.h()
    }

    /// Multi-index of a flat index.
    pub fn unflatten(&self, mut flat: usize, out: &mut [usize]) {
        for a in (0..self.d).rev() {
            out[a] = flat % self.n;
            flat /= self.n;
        }
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    /// Coordinates of the node with flat index `flat`.
    pub fn point(&self, flat: usize, out: &mut [f64]) {
        let mut f = flat;
        for a in (0..self.d).rev() {
            out[a] = self.coord(f % self.n);
            f /= self.n;
        }
    }

    /// All node coordinates, row-major `len × d`.
    pub fn points(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len() * self.d];
        for (flat, p) in out.chunks_exact_mut(self.d).enumerate() {
            self.point(flat, p);
        }
        out
    }

    /// Stride of axis `a` in the flat layout.
    pub fn stride(&self, a: usize) -> usize {
        self.n.pow((self.d - 1 - a) as u32)
    }

    /// True when the node touches the outer layer of the grid.
    pub fn is_boundary(&self, flat: usize) -> bool {
        let mut f = flat;
        for _ in 0..self.d {
            let i = f % self.n;
            if i == 0 || i == self.n - 1 {
                return true;
            }
            f /= self.n;
        }
        false
    }

    /// Same geometry scaled by `factor` (extent and spacing).
    pub fn scaled(&self, factor: f64) -> Self {
        Self { extent: self.extent * factor, ..*self }
    }

    /// Cubic (Catmull–Rom) interpolation of a field at `x`.
    pub fn interpolate(&self, field: &[f64], x: &[f64]) -> Result<f64> {
        debug_assert_eq!(field.len(), self.len());
        let h = self.h();
        let mut base = [0usize; 3];
        let mut w = [[0.0f64; 4]; 3];
        for a in 0..self.d {
            let u = (x[a] + self.extent) / h;
            if !u.is_finite() || u < 0.0 || u > (self.n - 1) as f64 {
                return Err(MfclError::OutsideGrid);
            }
            let i = (u.floor() as usize).min(self.n - 2);
            let t = u - i as f64;
            base[a] = i;
            w[a] = catmull_rom(t);
        }
        let n = self.n as isize;
        let mut acc = 0.0;
        let combos = 4usize.pow(self.d as u32);
        for c in 0..combos {
            let mut weight = 1.0;
            let mut flat = 0usize;
            let mut cc = c;
            for a in 0..self.d {
                let k = cc % 4;
                cc /= 4;
                let idx = (base[a] as isize + k as isize - 1).clamp(0, n - 1) as usize;
                weight *= w[a][k];
                flat += idx * self.stride(a);
            }
            acc += weight * field[flat];
        }
        Ok(acc)
    }
}

#[inline]
fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        -0.5 * t3 + t2 - 0.5 * t,
        1.5 * t3 - 2.5 * t2 + 1.0,
        -1.5 * t3 + 2.0 * t2 + 0.5 * t,
        0.5 * t3 - 0.5 * t2,
    ]
}

/// A probability density sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    pub geom: GridGeometry,
    pub values: Vec<f64>,
}

impl GridDensity {
    pub fn new(geom: GridGeometry, values: Vec<f64>) -> Result<Self> {
        if values.len() != geom.len() {
            return Err(MfclError::Domain(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                geom.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(MfclError::Invariant(format!("density value {v}")));
        }
        Ok(Self { geom, values })
    }

    /// Samples `f` at the nodes (no normalization).
    pub fn from_fn(geom: GridGeometry, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let mut p = vec![0.0; geom.d];
        let values = (0..geom.len())
            .map(|flat| {
                geom.point(flat, &mut p);
                f(&p)
            })
            .collect();
        Self::new(geom, values)
    }

    /// Isotropic Gaussian with the given mean and per-coordinate variance, normalized on the grid.
    pub fn gaussian(geom: GridGeometry, mean: &[f64], var: f64) -> Result<Self> {
        let d = geom.d;
        let amp = (2.0 * std::f64::consts::PI * var).powf(-(d as f64) / 2.0);
        let mut g = Self::from_fn(geom, |x| {
            let r2: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
            amp * (-r2 / (2.0 * var)).exp()
        })?;
        g.normalize()?;
        Ok(g)
    }

    pub fn d(&self) -> usize {
        self.geom.d
    }

    pub fn mass(&self) -> f64 {
        crate::quad::kahan_sum(self.values.iter().copied()) * self.geom.cell_volume()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let m = self.mass();
        if !(m > 0.0 && m.is_finite()) {
            return Err(MfclError::Invariant(format!("cannot normalize mass {m}")));
        }
        for v in &mut self.values {
            *v /= m;
        }
        Ok(())
    }

    /// Mass carried by the outermost layer of nodes.
    pub fn boundary_mass(&self) -> f64 {
        let s: f64 = (0..self.values.len())
            .filter(|&f| self.geom.is_boundary(f))
            .map(|f| self.values[f])
            .sum();
        s * self.geom.cell_volume()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Grid `L^p` norm; `p = ∞` gives the maximum.
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.sup();
        }
        let s: f64 = self.values.iter().map(|v| v.powf(p)).sum();
        (s * self.geom.cell_volume()).powf(1.0 / p)
    }

    pub fn l1_distance(&self, other: &GridDensity) -> Result<f64> {
        self.check_same_grid(other)?;
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum();
        Ok(s * self.geom.cell_volume())
    }

    pub fn check_same_grid(&self, other: &GridDensity) -> Result<()> {
        let (a, b) = (self.geom, other.geom);
        if a.d != b.d || a.n != b.n || (a.extent - b.extent).abs() > 1e-12 * a.extent {
            return Err(MfclError::Domain("densities live on different grids".into()));
        }
        Ok(())
    }

    /// First moment `∫ x μ`.
    pub fn mean(&self) -> Vec<f64> {
        let d = self.d();
        let mut p = vec![0.0; d];
        let mut m = vec![0.0; d];
        for (flat, v) in self.values.iter().enumerate() {
            self.geom.point(flat, &mut p);
            for a in 0..d {
                m[a] += v * p[a];
            }
        }
        let vol = self.geom.cell_volume();
        m.iter().map(|x| x * vol).collect()
    }

    /// Second moment `∫ |x|² μ`.
    pub fn second_moment(&self) -> f64 {
        let d = self.d();
        let mut p = vec![0.0; d];
        let mut m = 0.0;
        for (flat, v) in self.values.iter().enumerate() {
            self.geom.point(flat, &mut p);
            m += v * p.iter().map(|x| x * x).sum::<f64>();
        }
        m * self.geom.cell_volume()
    }

    /// Cubic re-sampling onto another grid followed by clipping and mass renormalization.
    pub fn resample(&self, target: GridGeometry) -> Result<Self> {
        if target.d != self.d() {
            return Err(MfclError::Domain("dimension mismatch in resample".into()));
        }
        let mut p = vec![0.0; target.d];
        let lo = self.geom.coord(0);
        let hi = self.geom.coord(self.geom.n - 1);
        let mut values = Vec::with_capacity(target.len());
        for flat in 0..target.len() {
            target.point(flat, &mut p);
            let inside = p.iter().all(|&x| x >= lo && x <= hi);
            let v = if inside { self.geom.interpolate(&self.values, &p)? } else { 0.0 };
            values.push(v.max(0.0));
        }
        let mut out = Self::new(target, values)?;
        out.normalize()?;
        Ok(out)
    }

    /// Density value by cubic interpolation.
    pub fn value_at(&self, x: &[f64]) -> Result<f64> {
        self.geom.interpolate(&self.values, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_mass_and_moments() {
        let g = GridGeometry::new(2, 80, 10.0).unwrap();
        let mu = GridDensity::gaussian(g, &[0.5, -0.25], 1.3).unwrap();
        assert!((mu.mass() - 1.0).abs() < 1e-13);
        let m = mu.mean();
        assert!((m[0] - 0.5).abs() < 1e-10 && (m[1] + 0.25).abs() < 1e-10, "{m:?}");
        assert!((mu.second_moment() - (2.0 * 1.3 + 0.25 + 0.0625)).abs() < 1e-9);
        assert!(mu.boundary_mass() < 1e-10);
    }

    #[test]
    fn interpolation_is_exact_on_nodes_and_quadratics() {
        let g = GridGeometry::new(1, 32, 4.0).unwrap();
        let f: Vec<f64> = (0..32).map(|i| g.coord(i).powi(2) - g.coord(i)).collect();
        assert_eq!(g.interpolate(&f, &[g.coord(7)]).unwrap(), f[7]);
        let x = 0.3377;
        assert!((g.interpolate(&f, &[x]).unwrap() - (x * x - x)).abs() < 1e-12);
        assert!(g.interpolate(&f, &[4.0]).is_err());
    }

    #[test]
    fn flatten_roundtrip() {
        let g = GridGeometry::new(3, 5, 1.0).unwrap();
        let mut idx = [0usize; 3];
        for flat in 0..g.len() {
            g.unflatten(flat, &mut idx);
            assert_eq!(g.flatten(&idx), flat);
        }
    }
}
