//! Partition function of the modulated Gibbs measure for a handful of particles in one dimension.

use crate::conv::{Convolver, KernelSet};
use crate::error::{MfclError, Result};
use crate::grid::GridDensity;
use crate::kernels::{g_radial, InteractionSpec};

/// Maximum number of tensor-grid nodes.
pub const MAX_NODES: u64 = 10_000_000;

/// `log K_{N,β}^τ(μ̄) / N` with `K = ∫ e^{−βN F̄_N^τ(Ξ, μ̄)} dμ̄^{⊗N}`, by tensor-grid quadrature.
pub fn small_n_partition_function(
    spec: &InteractionSpec,
    tau: f64,
    mu_bar: &GridDensity,
    n: usize,
    beta: f64,
) -> Result<f64> {
    let g = mu_bar.geom;
    if g.d != 1 || spec.d != 1 {
        return Err(MfclError::Unsupported("partition function quadrature is one-dimensional".into()));
    }
    if !(1..=3).contains(&n) {
        return Err(MfclError::Domain(format!("N = {n} outside 1..=3")));
    }
    if (g.n as u64).checked_pow(n as u32).is_none_or(|c| c > MAX_NODES) {
        return Err(MfclError::Domain(format!("{}^{n} quadrature nodes exceed {MAX_NODES}", g.n)));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(MfclError::Domain(format!("β = {beta}")));
    }
    let mass = mu_bar.mass();
    if (mass - 1.0).abs() > 1e-8 {
        return Err(MfclError::Invariant(format!("background mass {mass} is not 1")));
    }
    let conv = Convolver::new(g, spec.s, KernelSet::POTENTIAL);
    let pot = conv.potential(&mu_bar.values);
    let h = g.h();
    let self_energy = 0.5 * h * crate::quad::kahan_sum(mu_bar.values.iter().zip(&pot).map(|(m, p)| m * p));
    let scale = beta * n as f64 * spec.tau_factor(tau);
    let nf = n as f64;
    // Per-node one-body part of F_N: −(1/N)(g*μ)(ξ) and the log weight of μ̄(ξ) h.
    let one: Vec<f64> = pot.iter().map(|p| -p / nf).collect();
    let logw: Vec<f64> = mu_bar.values.iter().map(|m| if *m > 0.0 { (m * h).ln() } else { f64::NEG_INFINITY }).collect();
    let support: Vec<usize> = (0..g.n).filter(|&i| mu_bar.values[i] > 0.0).collect();
    let pair = |i: usize, j: usize| g_radial(spec.s, (g.coord(i) - g.coord(j)).abs()) / (nf * nf);
    // Coincident nodes: log of the mean of e^{−βN e^{−sτ/2} g(u−w)/N²} over a cell pair.
    let log_diag = diagonal_log_factor(spec.s, h, scale / (nf * nf));
    // Log-sum-exp over the tensor grid.
    let mut terms: Vec<f64> = Vec::new();
    let mut push = |f_n: f64, lw: f64| {
        let e = if scale == 0.0 { 0.0 } else { -scale * f_n };
        if e.is_finite() || e == f64::NEG_INFINITY {
            terms.push(lw + e);
        }
    };
    match n {
        1 => {
            for &i in &support {
                push(one[i] + self_energy, logw[i]);
            }
        }
        2 => {
            for &i in &support {
                for &j in &support {
                    if i == j {
                        push(one[i] + one[j] + self_energy, logw[i] + logw[j] + log_diag);
                    } else {
                        push(pair(i, j) + one[i] + one[j] + self_energy, logw[i] + logw[j]);
                    }
                }
            }
        }
        _ => {
            for &i in &support {
                for &j in &support {
                    for &k in &support {
                        let mut p = 0.0;
                        let mut lw = logw[i] + logw[j] + logw[k];
                        for (a, b) in [(i, j), (j, k), (i, k)] {
                            if a == b {
                                lw += log_diag;
                            } else {
                                p += pair(a, b);
                            }
                        }
                        push(p + one[i] + one[j] + one[k] + self_energy, lw);
                    }
                }
            }
        }
    }
    let mx = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return Err(MfclError::NonFinite("partition function".into()));
    }
    let sum = crate::quad::kahan_sum(terms.iter().map(|t| (t - mx).exp()));
    Ok((mx + sum.ln()) / nf)
}

/// `log ∫ p(z) e^{−c g(z)} dz` with `p(z) = (1 − |z|/h)/h` the law of the difference
/// of two uniform points in one cell.
fn diagonal_log_factor(s: f64, h: f64, c: f64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    let (u, w) = crate::quad::gauss_legendre(48, 0.0, 1.0);
    // z = h u⁴ smooths the behaviour at z = 0.
    let mut acc = 0.0;
    for (ui, wi) in u.iter().zip(&w) {
        let z = h * ui.powi(4);
        let jac = 4.0 * h * ui.powi(3);
        acc += wi * jac * 2.0 * (1.0 - z / h) / h * (-c * g_radial(s, z)).exp();
    }
    acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridGeometry;
    use crate::quad::gauss_legendre;

    /// `∫_a^b f` for `f` with an integrable log/power singularity at the left end.
    fn singular_left(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let (w, wt) = gauss_legendre(48, 0.0, 1.0);
        let len = b - a;
        w.iter().zip(&wt).map(|(u, q)| q * f(a + len * u.powi(4)) * 4.0 * len * u.powi(3)).sum()
    }

    /// `∫_{-h}^{h} g(x − y_j − u)(1 − |u|/h) du` by substitution-smoothed Gauss–Legendre.
    fn hat_potential_gl(s: f64, h: f64, lag: f64) -> f64 {
        let mut acc = 0.0;
        for (lo, hi) in [(-h, 0.0), (0.0, h)] {
            let f = |u: f64| g_radial(s, (lag - u).abs()) * (1.0 - u.abs() / h);
            // Singular point u = lag lies at an end or outside.
            if (lag - lo).abs() < 1e-12 * h {
                acc += singular_left(&f, lo, hi);
            } else if (lag - hi).abs() < 1e-12 * h {
                let fr = |v: f64| f(hi + lo - v);
                acc += singular_left(&fr, lo, hi);
            } else {
                let (w, wt) = gauss_legendre(48, lo, hi);
                acc += w.iter().zip(&wt).map(|(u, q)| q * f(*u)).sum::<f64>();
            }
        }
        acc
    }

    #[test]
    fn one_particle_matches_direct_quadrature() {
        let spec = InteractionSpec::gradient(1, 0.0, 1.0).unwrap();
        let g = GridGeometry::new(1, 96, 6.0).unwrap();
        let mu = GridDensity::gaussian(g, &[0.3], 1.2).unwrap();
        let beta = 1.7;
        let fast = small_n_partition_function(&spec, 0.0, &mu, 1, beta).unwrap();
        let h = g.h();
        let pot: Vec<f64> = (0..g.n)
            .map(|i| (0..g.n).map(|j| mu.values[j] * hat_potential_gl(0.0, h, (i as f64 - j as f64) * h)).sum())
            .collect();
        let self_e: f64 = 0.5 * h * (0..g.n).map(|i| mu.values[i] * pot[i]).sum::<f64>();
        let k: f64 = (0..g.n).map(|i| mu.values[i] * h * (-beta * (self_e - pot[i])).exp()).sum();
        assert!((fast - k.ln()).abs() < 1e-8, "{fast} vs {}", k.ln());
    }

    #[test]
    fn high_temperature_limit() {
        let spec = InteractionSpec::gradient(1, 0.0, 1.0).unwrap();
        let g = GridGeometry::new(1, 64, 6.0).unwrap();
        let mu = GridDensity::gaussian(g, &[0.0], 1.0).unwrap();
        let v0 = small_n_partition_function(&spec, 0.0, &mu, 2, 0.0).unwrap();
        assert!(v0.abs() < 1e-12);
        let small = small_n_partition_function(&spec, 0.0, &mu, 2, 1e-6).unwrap();
        assert!(small.abs() < 1e-5);
    }

    #[test]
    fn diagonal_factor_log_closed_form() {
        // E|u−w|^a = 2h^a/((a+1)(a+2)).
        let (h, a) = (0.3, 0.7);
        let v = diagonal_log_factor(0.0, h, a);
        let exact = (2.0 * h.powf(a) / ((a + 1.0) * (a + 2.0))).ln();
        assert!((v - exact).abs() < 1e-10, "{v} vs {exact}");
    }

    #[test]
    fn guards() {
        let spec = InteractionSpec::gradient(1, 0.0, 1.0).unwrap();
        let g = GridGeometry::new(1, 512, 6.0).unwrap();
        let mu = GridDensity::gaussian(g, &[0.0], 1.0).unwrap();
        assert!(small_n_partition_function(&spec, 0.0, &mu, 3, 1.0).is_err());
        assert!(small_n_partition_function(&spec, 0.0, &mu, 4, 1.0).is_err());
    }
}
