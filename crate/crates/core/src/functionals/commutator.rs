//! Commutator forms `∬_{≠} (v(x) − v(y))·K(x − y) d(emp − μ)^{⊗2}` and the `‖·‖_*` seminorm.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::conv::{origin_cell_average, Convolver, KernelSet};
use crate::error::{MfclError, Result};
use crate::fft::FftNd;
use crate::grid::{GridDensity, GridGeometry};
use crate::kernels::{grad_coefficient, InteractionSpec};
use crate::particles::ParticleConfig;
use crate::quad::Kahan;

/// A vector field sampled on a grid, one array per component.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub geom: GridGeometry,
    pub comps: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(geom: GridGeometry, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != geom.d || comps.iter().any(|c| c.len() != geom.len()) {
            return Err(MfclError::Domain("vector field shape does not match the grid".into()));
        }
        if comps.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MfclError::NonFinite("vector field".into()));
        }
        Ok(Self { geom, comps })
    }

    pub fn from_fn(geom: GridGeometry, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let d = geom.d;
        let mut comps = vec![Vec::with_capacity(geom.len()); d];
        let mut x = vec![0.0; d];
        for k in 0..geom.len() {
            geom.point(k, &mut x);
            let v = f(&x);
            for (c, vc) in comps.iter_mut().zip(v) {
                c.push(vc);
            }
        }
        Self::new(geom, comps)
    }

    pub fn constant(geom: GridGeometry, v: &[f64]) -> Result<Self> {
        Self::from_fn(geom, |_| v.to_vec())
    }

    /// Value at `x` by cubic interpolation.
    pub fn at(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.comps.iter().map(|c| self.geom.interpolate(c, x)).collect()
    }

    /// `∂_b v_a` by centred differences (one-sided at the edges), indexed `[a][b]`.
    pub fn jacobian(&self) -> Vec<Vec<Vec<f64>>> {
        let g = self.geom;
        (0..g.d).map(|a| (0..g.d).map(|b| partial(&g, &self.comps[a], b)).collect()).collect()
    }

    pub fn divergence(&self) -> Vec<f64> {
        let g = self.geom;
        let mut div = vec![0.0; g.len()];
        for a in 0..g.d {
            let p = partial(&g, &self.comps[a], a);
            for (o, v) in div.iter_mut().zip(p) {
                *o += v;
            }
        }
        div
    }

    /// `‖∇v‖_∞` with the spectral norm of the Jacobian at each node.
    pub fn grad_sup_norm(&self) -> f64 {
        let jac = self.jacobian();
        let d = self.geom.d;
        let mut best = 0.0f64;
        let mut m = vec![0.0; d * d];
        for k in 0..self.geom.len() {
            for a in 0..d {
                for b in 0..d {
                    m[a * d + b] = jac[a][b][k];
                }
            }
            best = best.max(spectral_norm(&m, d));
        }
        best
    }

    /// `M^T v`.
    pub fn transpose_apply(&self, m: &[f64]) -> Self {
        let d = self.geom.d;
        let comps = (0..d)
            .map(|a| (0..self.geom.len()).map(|k| (0..d).map(|b| m[b * d + a] * self.comps[b][k]).sum()).collect())
            .collect();
        Self { geom: self.geom, comps }
    }
}

/// Centred difference along axis `b`.
pub(crate) fn partial(g: &GridGeometry, f: &[f64], b: usize) -> Vec<f64> {
    let h = g.h();
    let st = g.stride(b);
    let n = g.n;
    let mut idx = vec![0usize; g.d];
    let mut out = vec![0.0; g.len()];
    for k in 0..g.len() {
        g.unflatten(k, &mut idx);
        let i = idx[b];
        out[k] = if i == 0 {
            (f[k + st] - f[k]) / h
        } else if i == n - 1 {
            (f[k] - f[k - st]) / h
        } else {
            (f[k + st] - f[k - st]) / (2.0 * h)
        };
    }
    out
}

/// Largest singular value of a `d×d` matrix (`d ≤ 3`) via the eigenvalues of `AᵀA`.
pub(crate) fn spectral_norm(m: &[f64], d: usize) -> f64 {
    let mut ata = [[0.0f64; 3]; 3];
    for i in 0..d {
        for j in 0..d {
            ata[i][j] = (0..d).map(|k| m[k * d + i] * m[k * d + j]).sum();
        }
    }
    let lam = match d {
        1 => ata[0][0],
        2 => {
            let tr = ata[0][0] + ata[1][1];
            let det = ata[0][0] * ata[1][1] - ata[0][1] * ata[1][0];
            0.5 * (tr + (tr * tr - 4.0 * det).max(0.0).sqrt())
        }
        _ => sym3_max_eigen(&ata),
    };
    lam.max(0.0).sqrt()
}

fn sym3_max_eigen(a: &[[f64; 3]; 3]) -> f64 {
    let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    if p1 == 0.0 {
        return a[0][0].max(a[1][1]).max(a[2][2]);
    }
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = (a[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
    q + 2.0 * p * phi.cos()
}

/// `‖(−Δ)^{(d−s)/4} v‖_{L^{2d/(d−2−s)}}` by an unpadded FFT (the field is assumed to vanish near the edge).
pub fn fractional_norm(spec: &InteractionSpec, v: &VectorField) -> Result<f64> {
    let g = v.geom;
    let d = g.d;
    if spec.is_super_coulomb() {
        return Err(MfclError::Domain("fractional term only defined for s < d − 2".into()));
    }
    let expo = (d as f64 - spec.s) / 2.0;
    let p = 2.0 * d as f64 / (d as f64 - 2.0 - spec.s);
    let n = g.n;
    let plan = FftNd::new(n, d);
    let dk = std::f64::consts::PI / g.extent;
    let mut idx = vec![0usize; d];
    let mut mag2 = vec![0.0; g.len()];
    for comp in &v.comps {
        let mut buf: Vec<Complex64> = comp.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        plan.forward(&mut buf);
        for (k, b) in buf.iter_mut().enumerate() {
            g.unflatten(k, &mut idx);
            let k2: f64 = idx.iter().map(|&i| (plan.freq_index(i) as f64 * dk).powi(2)).sum();
            *b *= k2.powf(expo / 2.0);
        }
        plan.inverse(&mut buf);
        for (m, b) in mag2.iter_mut().zip(&buf) {
            *m += b.re * b.re;
        }
    }
    let vol = g.cell_volume();
    let sum: f64 = crate::quad::kahan_sum(mag2.iter().map(|m| m.powf(p / 2.0)));
    Ok((sum * vol).powf(1.0 / p))
}

/// `‖v‖_*`: `‖∇v‖_∞`, plus the fractional term when `s < d − 2`.
pub fn star_norm(spec: &InteractionSpec, v: &VectorField) -> Result<f64> {
    let base = v.grad_sup_norm();
    if spec.is_super_coulomb() {
        Ok(base)
    } else {
        Ok(base + fractional_norm(spec, v)?)
    }
}

/// Which kernel the commutator pairs with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommutatorKernel {
    /// `∇g`.
    GradG,
    /// `k = M ∇g`.
    K,
}

/// Particle–particle, particle–background and background–background parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommutatorParts {
    pub pp: f64,
    pub pb: f64,
    pub bb: f64,
    pub total: f64,
}

/// Grid fields reused across particle configurations for one `(v, μ)`.
#[derive(Debug, Clone)]
pub struct CommutatorBackground {
    s: f64,
    /// Effective field (`v`, or `Mᵀv` for the `k` kernel).
    w: VectorField,
    /// `w(x)·(∇g*μ)(x) − (∇g·*(wμ))(x)` at the nodes.
    node_field: Vec<f64>,
    pub bb: f64,
}

impl CommutatorBackground {
    pub fn new(spec: &InteractionSpec, v: &VectorField, mu: &GridDensity, kernel: CommutatorKernel) -> Result<Self> {
        if v.geom != mu.geom {
            return Err(MfclError::Domain("vector field and density live on different grids".into()));
        }
        let m = (mu.mass() - 1.0).abs();
        if m > 1e-8 {
            return Err(MfclError::Invariant(format!("background mass differs from 1 by {m}")));
        }
        let w = match kernel {
            CommutatorKernel::GradG => v.clone(),
            CommutatorKernel::K => v.transpose_apply(&spec.drift_matrix()),
        };
        let g = mu.geom;
        let d = g.d;
        let conv = Convolver::new(g, spec.s, KernelSet::GRADIENT);
        let kmu = conv.gradient(&mu.values);
        let wmu: Vec<Vec<f64>> = w.comps.iter().map(|c| c.iter().zip(&mu.values).map(|(a, b)| a * b).collect()).collect();
        let kwmu = conv.gradient_dot(&wmu);
        let mut node_field: Vec<f64> =
            (0..g.len()).map(|k| (0..d).map(|a| w.comps[a][k] * kmu[a][k]).sum::<f64>() - kwmu[k]).collect();
        if d >= 2 {
            // The odd kernel weight vanishes at lag 0; restore the own-cell part
            // −μ (div w / d) ∫_cell |z|^{-s}.
            let h = g.h();
            let mean_pow = if spec.s == 0.0 { 1.0 } else { spec.s * origin_cell_average(d, spec.s, h) };
            let cell = mean_pow * g.cell_volume();
            let div = w.divergence();
            for k in 0..g.len() {
                node_field[k] -= mu.values[k] * div[k] / d as f64 * cell;
            }
        }
        let bb = g.cell_volume() * crate::quad::kahan_sum(mu.values.iter().zip(&node_field).map(|(m, f)| m * f));
        Ok(Self { s: spec.s, w, node_field, bb })
    }

    /// Evaluates all three parts for a configuration.
    pub fn evaluate(&self, x: &ParticleConfig) -> Result<CommutatorParts> {
        let d = self.w.geom.d;
        if x.d != d {
            return Err(MfclError::Domain("particle dimension differs from grid".into()));
        }
        let n = x.n();
        let nf = n as f64;
        let mut wx = Vec::with_capacity(n * d);
        let mut pb = Kahan::default();
        for p in x.positions.chunks_exact(d) {
            wx.extend(self.w.at(p)?);
            pb.add(self.w.geom.interpolate(&self.node_field, p)?);
        }
        let mut pp = Kahan::default();
        let pos = &x.positions;
        for i in 0..n {
            for j in i + 1..n {
                let mut r2 = 0.0;
                let mut dot = 0.0;
                for a in 0..d {
                    let z = pos[i * d + a] - pos[j * d + a];
                    r2 += z * z;
                    dot += (wx[i * d + a] - wx[j * d + a]) * z;
                }
                if r2 == 0.0 {
                    return Err(MfclError::Coincident(i, j));
                }
                // (w_i − w_j)·∇g(x_i − x_j), counted for (i,j) and (j,i).
                pp.add(-2.0 * dot * grad_coefficient(self.s, r2));
            }
        }
        let pp = pp.value() / (nf * nf);
        let pb = -2.0 / nf * pb.value();
        Ok(CommutatorParts { pp, pb, bb: self.bb, total: pp + pb + self.bb })
    }
}

/// Commutator form against the fluctuation `emp(X) − μ`.
pub fn commutator_form(
    spec: &InteractionSpec,
    v: &VectorField,
    x: &ParticleConfig,
    mu: &GridDensity,
    kernel: CommutatorKernel,
) -> Result<CommutatorParts> {
    CommutatorBackground::new(spec, v, mu, kernel)?.evaluate(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_gives_zero() {
        let spec = InteractionSpec::gradient(2, 0.5, 1.0).unwrap();
        let g = GridGeometry::new(2, 64, 6.0).unwrap();
        let mu = GridDensity::gaussian(g, &[0.0, 0.0], 1.0).unwrap();
        let v = VectorField::constant(g, &[0.3, -1.2]).unwrap();
        let x = ParticleConfig::new(2, vec![0.1, 0.2, -0.5, 0.7, 1.0, -0.3]).unwrap();
        let c = commutator_form(&spec, &v, &x, &mu, CommutatorKernel::GradG).unwrap();
        assert!(c.pp.abs() < 1e-15);
        assert!(c.total.abs() < 1e-12, "{c:?}");
    }

    #[test]
    fn identity_field_log_gives_one_over_n() {
        for d in [1usize, 2] {
            let spec = InteractionSpec::gradient(d, 0.0, 1.0).unwrap();
            let n = if d == 1 { 2048 } else { 128 };
            let g = GridGeometry::new(d, n, 8.0).unwrap();
            let mu = GridDensity::gaussian(g, &vec![0.0; d], 1.0).unwrap();
            let v = VectorField::from_fn(g, |x| x.to_vec()).unwrap();
            let pts: Vec<f64> = (0..4 * d).map(|k| 0.37 * k as f64 - 0.9).collect();
            let x = ParticleConfig::new(d, pts).unwrap();
            let c = commutator_form(&spec, &v, &x, &mu, CommutatorKernel::GradG).unwrap();
            assert!((c.pp + 0.75).abs() < 1e-14);
            assert!((c.total - 0.25).abs() < 2e-3, "d={d}: {c:?}");
        }
    }

    #[test]
    fn radial_background_term_vanishes() {
        let g = GridGeometry::new(2, 96, 7.0).unwrap();
        let mu = GridDensity::gaussian(g, &[0.0, 0.0], 1.0).unwrap();
        let m = InteractionSpec::rotation_generator(2);
        let spec = InteractionSpec::antisymmetric(2, 0.0, m.clone(), 1.0).unwrap();
        let grad_phi = |x: &[f64]| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            let f = (-r2 / 3.0).exp();
            vec![x[0] * f, x[1] * f]
        };
        let v = VectorField::from_fn(g, grad_phi).unwrap();
        let b = CommutatorBackground::new(&spec, &v, &mu, CommutatorKernel::K).unwrap();
        assert!(b.bb.abs() < 1e-8, "{}", b.bb);
        let mv = VectorField::from_fn(g, |x| {
            let q = grad_phi(x);
            vec![m[0] * q[0] + m[1] * q[1], m[2] * q[0] + m[3] * q[1]]
        })
        .unwrap();
        let b = CommutatorBackground::new(&spec, &mv, &mu, CommutatorKernel::GradG).unwrap();
        assert!(b.bb.abs() < 1e-8, "{}", b.bb);
    }

    #[test]
    fn fractional_norm_matches_dense_dft() {
        let spec = InteractionSpec::gradient(3, 0.0, 1.0).unwrap();
        let g = GridGeometry::new(3, 6, 3.0).unwrap();
        let v = VectorField::from_fn(g, |x| {
            let f = (-(x[0] * x[0] + 2.0 * x[1] * x[1] + x[2] * x[2])).exp();
            vec![f, x[0] * f, -x[2] * f]
        })
        .unwrap();
        let fast = fractional_norm(&spec, &v).unwrap();
        // Dense DFT oracle.
        let n = g.n;
        let len = g.len();
        let dk = std::f64::consts::PI / g.extent;
        let freq = |i: usize| if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
        let mut ia = vec![0usize; 3];
        let mut ib = vec![0usize; 3];
        let mut mag2 = vec![0.0; len];
        for comp in &v.comps {
            let mut hat = vec![Complex64::default(); len];
            for (k, hk) in hat.iter_mut().enumerate() {
                g.unflatten(k, &mut ia);
                for (j, &vj) in comp.iter().enumerate() {
                    g.unflatten(j, &mut ib);
                    let ph: f64 = (0..3).map(|a| (ia[a] * ib[a]) as f64).sum::<f64>() * -2.0 * std::f64::consts::PI / n as f64;
                    *hk += vj * Complex64::from_polar(1.0, ph);
                }
                let k2: f64 = ia.iter().map(|&i| (freq(i) * dk).powi(2)).sum();
                *hk *= k2.powf(0.75);
            }
            for (j, m) in mag2.iter_mut().enumerate() {
                g.unflatten(j, &mut ib);
                let mut acc = Complex64::default();
                for (k, hk) in hat.iter().enumerate() {
                    g.unflatten(k, &mut ia);
                    let ph: f64 = (0..3).map(|a| (ia[a] * ib[a]) as f64).sum::<f64>() * 2.0 * std::f64::consts::PI / n as f64;
                    acc += hk * Complex64::from_polar(1.0, ph);
                }
                let re = acc.re / len as f64;
                *m += re * re;
            }
        }
        let p = 6.0;
        let slow = (mag2.iter().map(|m| m.powf(p / 2.0)).sum::<f64>() * g.cell_volume()).powf(1.0 / p);
        assert!((fast - slow).abs() < 1e-12 * slow.max(1.0), "{fast} vs {slow}");
    }

    #[test]
    fn spectral_norm_of_rotation_and_shear() {
        assert!((spectral_norm(&[0.0, 1.0, -1.0, 0.0], 2) - 1.0).abs() < 1e-15);
        let s3 = spectral_norm(&[2.0, 0.0, 0.0, 0.0, -3.0, 0.0, 0.0, 0.0, 1.0], 3);
        assert!((s3 - 3.0).abs() < 1e-12);
    }
}
