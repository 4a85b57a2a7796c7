//! Relative entropy and relative Fisher information.

use serde::{Deserialize, Serialize};

use crate::error::{MfclError, Result};
use crate::grid::GridDensity;

/// Product Gaussian law on `R^{dN}` with independent coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianProduct {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl GaussianProduct {
    pub fn new(means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if means.len() != variances.len() || means.is_empty() {
            return Err(MfclError::Domain("mean/variance length mismatch".into()));
        }
        if variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) || means.iter().any(|m| !m.is_finite()) {
            return Err(MfclError::Domain("non-normalizable Gaussian parameters".into()));
        }
        Ok(Self { means, variances })
    }

    /// `N` i.i.d. copies of an isotropic law with the given mean and variance.
    pub fn iid(mean: &[f64], var: f64, n: usize) -> Result<Self> {
        let d = mean.len();
        Self::new(
            (0..n * d).map(|k| mean[k % d]).collect(),
            vec![var; n * d],
        )
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }
}

fn check_pair(f: &GaussianProduct, g: &GaussianProduct, n: usize) -> Result<()> {
    if f.dim() != g.dim() {
        return Err(MfclError::Domain("Gaussian laws of different dimension".into()));
    }
    if n == 0 || f.dim() % n != 0 {
        return Err(MfclError::Domain(format!("dimension {} is not a multiple of N = {n}", f.dim())));
    }
    Ok(())
}

/// `H_N(f|g) = (1/N) ∫ f log(f/g)` in closed form.
pub fn relative_entropy_gaussian(f: &GaussianProduct, g: &GaussianProduct, n: usize) -> Result<f64> {
    check_pair(f, g, n)?;
    let mut kl = 0.0;
    for k in 0..f.dim() {
        let (m1, v1, m2, v2) = (f.means[k], f.variances[k], g.means[k], g.variances[k]);
        let r = v1 / v2;
        kl += 0.5 * (r - 1.0 - r.ln() + (m1 - m2) * (m1 - m2) / v2);
    }
    Ok(kl / n as f64)
}

/// `I_N(f|g) = (1/N) ∫ |∇ log(f/g)|² f` in closed form.
pub fn fisher_information_gaussian(f: &GaussianProduct, g: &GaussianProduct, n: usize) -> Result<f64> {
    check_pair(f, g, n)?;
    let mut i = 0.0;
    for k in 0..f.dim() {
        let (m1, v1, m2, v2) = (f.means[k], f.variances[k], g.means[k], g.variances[k]);
        let a = 1.0 / v2 - 1.0 / v1;
        let b = (m1 - m2) / v2;
        i += a * a * v1 + b * b;
    }
    Ok(i / n as f64)
}

/// Values below this are treated as zero on grids.
pub const GRID_FLOOR: f64 = 1e-300;

/// `∫ f log(f/g)` on a grid; `+∞` when `f > 0` where `g` vanishes.
pub fn relative_entropy_grid(f: &GridDensity, g: &GridDensity) -> Result<f64> {
    f.check_same_grid(g)?;
    let mut acc = crate::quad::Kahan::default();
    for (&a, &b) in f.values.iter().zip(&g.values) {
        if a <= GRID_FLOOR {
            continue;
        }
        if b <= GRID_FLOOR {
            return Ok(f64::INFINITY);
        }
        acc.add(a * (a / b).ln());
    }
    Ok((acc.value() * f.geom.cell_volume()).max(0.0))
}

/// `∫ |∇ log(f/g)|² f` on a grid by centred differences; `+∞` on support mismatch.
pub fn fisher_information_grid(f: &GridDensity, g: &GridDensity) -> Result<f64> {
    f.check_same_grid(g)?;
    let geom = f.geom;
    let d = geom.d;
    let n = geom.n;
    let h = geom.h();
    let mut w = vec![f64::NAN; geom.len()];
    for k in 0..geom.len() {
        let (a, b) = (f.values[k], g.values[k]);
        if a > GRID_FLOOR {
            if b <= GRID_FLOOR {
                return Ok(f64::INFINITY);
            }
            w[k] = (a / b).ln();
        }
    }
    let mut idx = vec![0usize; d];
    let mut acc = crate::quad::Kahan::default();
    for k in 0..geom.len() {
        if w[k].is_nan() {
            continue;
        }
        geom.unflatten(k, &mut idx);
        let mut grad2 = 0.0;
        let mut ok = true;
        for a in 0..d {
            if idx[a] == 0 || idx[a] == n - 1 {
                ok = false;
                break;
            }
            let st = geom.stride(a);
            let (lo, hi) = (w[k - st], w[k + st]);
            if lo.is_nan() || hi.is_nan() {
                ok = false;
                break;
            }
            let der = (hi - lo) / (2.0 * h);
            grad2 += der * der;
        }
        if ok {
            acc.add(grad2 * f.values[k]);
        }
    }
    Ok(acc.value() * geom.cell_volume())
}
