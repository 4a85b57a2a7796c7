//! Energy distance `2E|X−Y| − E|X−X'| − E|Y−Y'|` (V-statistics).

use crate::error::{MfclError, Result};
use crate::grid::GridDensity;
use crate::particles::ParticleConfig;
use crate::quad::Kahan;

fn mean_pair_distance(a: &ParticleConfig, b: &ParticleConfig) -> f64 {
    let d = a.d;
    let mut acc = Kahan::default();
    for p in a.positions.chunks_exact(d) {
        for q in b.positions.chunks_exact(d) {
            acc.add(p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt());
        }
    }
    acc.value() / (a.n() * b.n()) as f64
}

/// Energy distance between two empirical measures in any dimension.
pub fn energy_distance_empirical(a: &ParticleConfig, b: &ParticleConfig) -> Result<f64> {
    if a.d != b.d {
        return Err(MfclError::Domain("samples of different dimension".into()));
    }
    if a.n() == 0 || b.n() == 0 {
        return Err(MfclError::Domain("empty sample".into()));
    }
    let v = 2.0 * mean_pair_distance(a, b) - mean_pair_distance(a, a) - mean_pair_distance(b, b);
    Ok(v.max(0.0))
}

/// Energy distance between a one-dimensional sample and a grid density, the
/// latter read as piecewise constant on node-centred cells.
pub fn energy_distance_to_grid(x: &ParticleConfig, mu: &GridDensity) -> Result<f64> {
    let g = mu.geom;
    if g.d != 1 || x.d != 1 {
        return Err(MfclError::Unsupported("grid energy distance is one-dimensional".into()));
    }
    if x.n() == 0 {
        return Err(MfclError::Domain("empty sample".into()));
    }
    let h = g.h();
    let total: f64 = mu.values.iter().sum::<f64>() * h;
    if !(total > 0.0) {
        return Err(MfclError::Domain("density has no mass".into()));
    }
    let dens: Vec<f64> = mu.values.iter().map(|v| v / total).collect();
    let n = g.n;
    let lo = g.coord(0) - 0.5 * h;
    // Prefix sums of cell masses m_k and first moments m_k x_k.
    let mut pm = vec![0.0; n + 1];
    let mut px = vec![0.0; n + 1];
    for k in 0..n {
        let m = dens[k] * h;
        pm[k + 1] = pm[k] + m;
        px[k + 1] = px[k] + m * g.coord(k);
    }
    // E|X − Y| for each particle.
    let mut cross = Kahan::default();
    for &p in &x.positions {
        let u = (p - lo) / h;
        if !(0.0..=n as f64).contains(&u) {
            return Err(MfclError::OutsideGrid);
        }
        let c = (u.floor() as usize).min(n - 1);
        let (a, b) = (lo + c as f64 * h, lo + (c + 1) as f64 * h);
        let left = p * pm[c] - px[c];
        let right = (px[n] - px[c + 1]) - p * (pm[n] - pm[c + 1]);
        let own = dens[c] * ((p - a).powi(2) + (b - p).powi(2)) / 2.0;
        cross.add(left + right + own);
    }
    let cross = cross.value() / x.n() as f64;
    // E|Y − Y'| = 2 Σ_{k<l} m_k m_l (x_l − x_k) + Σ_k μ_k² h³/3.
    let mut yy = Kahan::default();
    for l in 0..n {
        let m = dens[l] * h;
        yy.add(2.0 * m * (g.coord(l) * pm[l] - px[l]));
        yy.add(dens[l] * dens[l] * h * h * h / 3.0);
    }
    let xx = mean_pair_distance(x, x);
    Ok((2.0 * cross - xx - yy.value()).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridGeometry;

    #[test]
    fn identical_samples_have_zero_distance() {
        let a = ParticleConfig::new(2, vec![0.0, 1.0, 2.0, -1.0, 0.5, 0.5]).unwrap();
        assert_eq!(energy_distance_empirical(&a, &a).unwrap(), 0.0);
        let b = ParticleConfig::new(2, vec![0.0, 1.5, 2.0, -1.0, 0.5, 0.5]).unwrap();
        assert!(energy_distance_empirical(&a, &b).unwrap() > 0.0);
    }

    #[test]
    fn point_masses() {
        // δ_0 vs δ_1: 2·1 − 0 − 0.
        let a = ParticleConfig::new(1, vec![0.0]).unwrap();
        let b = ParticleConfig::new(1, vec![1.0]).unwrap();
        assert!((energy_distance_empirical(&a, &b).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_density_against_its_centre() {
        // μ uniform on [0,1] (exact cells), x = 1/2: 2·(1/4) − 0 − 1/3.
        let g = GridGeometry::new(1, 20, 1.0).unwrap();
        let mu = GridDensity::from_fn(g, |x| if x[0] > -0.01 && x[0] < 0.99 { 1.0 } else { 0.0 }).unwrap();
        // Cells centred at 0, 0.1, ..., 0.9 cover [−0.05, 0.95].
        let x = ParticleConfig::new(1, vec![0.45]).unwrap();
        let v = energy_distance_to_grid(&x, &mu).unwrap();
        assert!((v - (0.5 - 1.0 / 3.0)).abs() < 1e-12, "{v}");
    }

    #[test]
    fn grid_matches_brute_force_cells() {
        let g = GridGeometry::new(1, 40, 3.0).unwrap();
        let mu = GridDensity::gaussian(g, &[0.2], 0.6).unwrap();
        let x = ParticleConfig::new(1, vec![-0.7, 0.1, 0.33, 1.4]).unwrap();
        let fast = energy_distance_to_grid(&x, &mu).unwrap();
        // Brute force with many sub-cell points.
        let h = g.h();
        let sub = 100;
        let mut ys = Vec::new();
        let mut ws = Vec::new();
        for k in 0..g.n {
            for j in 0..sub {
                ys.push(g.coord(k) - 0.5 * h + (j as f64 + 0.5) * h / sub as f64);
                ws.push(mu.values[k] * h / sub as f64);
            }
        }
        let cross: f64 = x
            .positions
            .iter()
            .map(|p| ys.iter().zip(&ws).map(|(y, w)| w * (p - y).abs()).sum::<f64>())
            .sum::<f64>()
            / 4.0;
        let mut yy = 0.0;
        for (y1, w1) in ys.iter().zip(&ws) {
            for (y2, w2) in ys.iter().zip(&ws) {
                yy += w1 * w2 * (y1 - y2).abs();
            }
        }
        let xx = mean_pair_distance(&x, &x);
        let slow = 2.0 * cross - xx - yy;
        assert!((fast - slow).abs() < 1e-5, "{fast} vs {slow}");
    }
}
