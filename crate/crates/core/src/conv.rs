//! Free-space FFT convolution of grid fields with `g` and `∇g`.
//!
//! In one dimension the weights are exact moments of the kernel against the
//! piecewise-linear interpolant of the field (principal value at lag 0). In
//! two and three dimensions off-origin lags use point values and the origin
//! uses the exact cell average of `g` (zero for the odd kernel `∇g`).

use num_complex::Complex64;

use crate::fft::FftNd;
use crate::grid::GridGeometry;
use crate::kernels::{g_radial, grad_coefficient};
use crate::quad::gauss_legendre;

/// Lag beyond which the one-dimensional hat moments use their Taylor series.
const SERIES_LAG: usize = 64;

/// Which kernels a [`Convolver`] prepares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelSet {
    pub potential: bool,
    pub gradient: bool,
}

impl KernelSet {
    pub const ALL: Self = Self { potential: true, gradient: true };
    pub const POTENTIAL: Self = Self { potential: true, gradient: false };
    pub const GRADIENT: Self = Self { potential: false, gradient: true };
}

/// Precomputed kernel spectra on a zero-padded grid.
#[derive(Debug, Clone)]
pub struct Convolver {
    pub geom: GridGeometry,
    pub s: f64,
    plan: FftNd,
    potential_hat: Option<Vec<Complex64>>,
    gradient_hat: Vec<Vec<Complex64>>,
}

/// `∫∫ g` antiderivatives along a line, used by the hat moments.
fn g_first_antiderivative(s: f64, y: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    if s == 0.0 {
        -y * y.abs().ln() + y
    } else {
        y.signum() * y.abs().powf(1.0 - s) / (s * (1.0 - s))
    }
}

fn g_second_antiderivative(s: f64, y: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    if s == 0.0 {
        -0.5 * y * y * y.abs().ln() + 0.75 * y * y
    } else {
        y.abs().powf(2.0 - s) / (s * (1.0 - s) * (2.0 - s))
    }
}

/// Derivatives `g^{(k)}(a)` for `a > 0`, k = 0..=5, in one dimension.
fn g_derivatives_1d(s: f64, a: f64) -> [f64; 6] {
    if s == 0.0 {
        [
            -a.ln(),
            -1.0 / a,
            1.0 / (a * a),
            -2.0 / a.powi(3),
            6.0 / a.powi(4),
            -24.0 / a.powi(5),
        ]
    } else {
        let mut out = [0.0; 6];
        out[0] = a.powf(-s) / s;
        let mut coef = -1.0;
        for (k, o) in out.iter_mut().enumerate().skip(1) {
            *o = coef * a.powf(-s - k as f64);
            coef *= -(s + k as f64);
        }
        out
    }
}

/// `∫ g(jh − u)(1 − |u|/h) du` for the one-dimensional hat function.
pub fn hat_weight_potential(s: f64, h: f64, j: i64) -> f64 {
    let a = j as f64 * h;
    if j.unsigned_abs() as usize >= SERIES_LAG {
        let dv = g_derivatives_1d(s, a.abs());
        return h * (dv[0] + h * h * dv[2] / 12.0 + h.powi(4) * dv[4] / 360.0);
    }
    (g_second_antiderivative(s, a + h) - 2.0 * g_second_antiderivative(s, a)
        + g_second_antiderivative(s, a - h))
        / h
}

/// `∫ g'(jh − u)(1 − |u|/h) du` (principal value at `j = 0`).
pub fn hat_weight_gradient(s: f64, h: f64, j: i64) -> f64 {
    if j == 0 {
        return 0.0;
    }
    let a = j as f64 * h;
    if j.unsigned_abs() as usize >= SERIES_LAG {
        let dv = g_derivatives_1d(s, a.abs());
        let v = h * (dv[1] + h * h * dv[3] / 12.0 + h.powi(4) * dv[5] / 360.0);
        return a.signum() * v;
    }
    (g_first_antiderivative(s, a + h) - 2.0 * g_first_antiderivative(s, a)
        + g_first_antiderivative(s, a - h))
        / h
}

/// Average of `g` over the cube `[-h/2, h/2]^d` (pyramid decomposition, closed-form radial part).
pub fn origin_cell_average(d: usize, s: f64, h: f64) -> f64 {
    let a = 0.5 * h;
    let df = d as f64;
    let radial = |rho: f64| {
        if s == 0.0 {
            -(a * rho).ln() / df + 1.0 / (df * df)
        } else {
            (a * rho).powf(-s) / (s * (df - s))
        }
    };
    match d {
        1 => radial(1.0),
        2 => {
            let (x, w) = gauss_legendre(64, 0.0, 1.0);
            2.0 * x
                .iter()
                .zip(&w)
                .map(|(v, w)| w * radial((1.0 + v * v).sqrt()))
                .sum::<f64>()
        }
        _ => {
            let (x, w) = gauss_legendre(32, 0.0, 1.0);
            let mut acc = 0.0;
            for (v1, w1) in x.iter().zip(&w) {
                for (v2, w2) in x.iter().zip(&w) {
                    acc += w1 * w2 * radial((1.0 + v1 * v1 + v2 * v2).sqrt());
                }
            }
            df * acc
        }
    }
}

/// Mean of `|u − w|^{-s}` for `u, w` independent and uniform on a cube of side `h`.
pub fn cell_pair_mean_power(d: usize, s: f64, h: f64) -> f64 {
    if s == 0.0 {
        return 1.0;
    }
    let df = d as f64;
    // Per-axis density of u−w is (1 − |z|/h)/h on [−h, h].
    let integrand = |c: &[f64]| {
        let rho = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        // Elementary symmetric polynomials of c.
        let mut e = vec![0.0; c.len() + 1];
        e[0] = 1.0;
        for &ci in c {
            for k in (1..e.len()).rev() {
                e[k] += e[k - 1] * ci;
            }
        }
        let poly: f64 = e
            .iter()
            .enumerate()
            .map(|(k, ek)| if k % 2 == 0 { 1.0 } else { -1.0 } * ek / (df - s + k as f64))
            .sum();
        rho.powf(-s) * poly
    };
    let scale = 2f64.powi(d as i32) * df * h.powf(-s);
    match d {
        1 => scale * integrand(&[1.0]),
        2 => {
            let (x, w) = gauss_legendre(64, 0.0, 1.0);
            scale * x.iter().zip(&w).map(|(v, w)| w * integrand(&[1.0, *v])).sum::<f64>()
        }
        _ => {
            let (x, w) = gauss_legendre(32, 0.0, 1.0);
            let mut acc = 0.0;
            for (v1, w1) in x.iter().zip(&w) {
                for (v2, w2) in x.iter().zip(&w) {
                    acc += w1 * w2 * integrand(&[1.0, *v1, *v2]);
                }
            }
            scale * acc
        }
    }
}

impl Convolver {
    pub fn new(geom: GridGeometry, s: f64, set: KernelSet) -> Self {
        let p = 2 * geom.n;
        let plan = FftNd::new(p, geom.d);
        let mut conv = Self { geom, s, plan, potential_hat: None, gradient_hat: Vec::new() };
        if set.potential {
            let mut w = conv.kernel_array(|lag| conv.potential_weight(lag));
            conv.plan.forward(&mut w);
            conv.potential_hat = Some(w);
        }
        if set.gradient {
            for c in 0..geom.d {
                let mut w = conv.kernel_array(|lag| conv.gradient_weight(lag, c));
                conv.plan.forward(&mut w);
                conv.gradient_hat.push(w);
            }
        }
        conv
    }

    fn kernel_array(&self, weight: impl Fn(&[i64]) -> f64) -> Vec<Complex64> {
        let p = self.plan.p;
        let d = self.geom.d;
        let n = self.geom.n as i64;
        let mut out = vec![Complex64::default(); self.plan.len()];
        let mut lag = vec![0i64; d];
        for (flat, o) in out.iter_mut().enumerate() {
            let mut f = flat;
            let mut valid = true;
            for a in (0..d).rev() {
                let k = (f % p) as i64;
                f /= p;
                let l = if k < p as i64 / 2 { k } else { k - p as i64 };
                if l.abs() >= n {
                    valid = false;
                }
                lag[a] = l;
            }
            if valid {
                *o = Complex64::new(weight(&lag), 0.0);
            }
        }
        out
    }

    /// Weight of lag `j` for `g`, including the quadrature measure.
    pub fn potential_weight(&self, lag: &[i64]) -> f64 {
        let h = self.geom.h();
        let d = self.geom.d;
        if d == 1 {
            return hat_weight_potential(self.s, h, lag[0]);
        }
        let r2: f64 = lag.iter().map(|&l| (l as f64 * h).powi(2)).sum();
        let vol = h.powi(d as i32);
        if r2 == 0.0 {
            origin_cell_average(d, self.s, h) * vol
        } else {
            g_radial(self.s, r2.sqrt()) * vol
        }
    }

    /// Weight of lag `j` for component `c` of `∇g`.
    pub fn gradient_weight(&self, lag: &[i64], c: usize) -> f64 {
        let h = self.geom.h();
        let d = self.geom.d;
        if d == 1 {
            return hat_weight_gradient(self.s, h, lag[0]);
        }
        let r2: f64 = lag.iter().map(|&l| (l as f64 * h).powi(2)).sum();
        if r2 == 0.0 {
            return 0.0;
        }
        -(lag[c] as f64 * h) * grad_coefficient(self.s, r2) * h.powi(d as i32)
    }

    fn embed(&self, re: &[f64], im: Option<&[f64]>) -> Vec<Complex64> {
        let n = self.geom.n;
        let p = self.plan.p;
        let d = self.geom.d;
        let mut buf = vec![Complex64::default(); self.plan.len()];
        let mut idx = vec![0usize; d];
        for flat in 0..self.geom.len() {
            self.geom.unflatten(flat, &mut idx);
            let pf = idx.iter().fold(0, |acc, &i| acc * p + i);
            buf[pf] = Complex64::new(re[flat], im.map_or(0.0, |v| v[flat]));
        }
        let _ = n;
        buf
    }

    fn extract(&self, buf: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let p = self.plan.p;
        let d = self.geom.d;
        let mut idx = vec![0usize; d];
        let mut re = Vec::with_capacity(self.geom.len());
        let mut im = Vec::with_capacity(self.geom.len());
        for flat in 0..self.geom.len() {
            self.geom.unflatten(flat, &mut idx);
            let pf = idx.iter().fold(0, |acc, &i| acc * p + i);
            re.push(buf[pf].re);
            im.push(buf[pf].im);
        }
        (re, im)
    }

    /// Spectrum of a real field (zero padded).
    pub fn spectrum(&self, f: &[f64]) -> Vec<Complex64> {
        let mut buf = self.embed(f, None);
        self.plan.forward(&mut buf);
        buf
    }

    /// Spectra of two real fields with one complex transform.
    fn spectrum_pair(&self, a: &[f64], b: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut buf = self.embed(a, Some(b));
        self.plan.forward(&mut buf);
        let p = self.plan.p;
        let d = self.geom.d;
        let len = buf.len();
        let mut fa = vec![Complex64::default(); len];
        let mut fb = vec![Complex64::default(); len];
        let mut idx = vec![0usize; d];
        for k in 0..len {
            // Index of −k.
            let mut f = k;
            for a in (0..d).rev() {
                idx[a] = (p - f % p) % p;
                f /= p;
            }
            let mk = idx.iter().fold(0, |acc, &i| acc * p + i);
            let z = buf[k];
            let zc = buf[mk].conj();
            fa[k] = 0.5 * (z + zc);
            fb[k] = Complex64::new(0.0, -0.5) * (z - zc);
        }
        (fa, fb)
    }

    /// `g * f` at the nodes.
    pub fn potential(&self, f: &[f64]) -> Vec<f64> {
        let spec = self.spectrum(f);
        self.potential_from_spectrum(&spec)
    }

    pub fn potential_from_spectrum(&self, spec: &[Complex64]) -> Vec<f64> {
        let k = self.potential_hat.as_ref().expect("potential kernel not prepared");
        let mut buf: Vec<Complex64> = spec.iter().zip(k).map(|(a, b)| a * b).collect();
        self.plan.inverse(&mut buf);
        self.extract(&buf).0
    }

    /// `∇g * f` at the nodes, one vector per component.
    pub fn gradient(&self, f: &[f64]) -> Vec<Vec<f64>> {
        let spec = self.spectrum(f);
        self.gradient_from_spectrum(&spec)
    }

    pub fn gradient_from_spectrum(&self, spec: &[Complex64]) -> Vec<Vec<f64>> {
        assert!(!self.gradient_hat.is_empty(), "gradient kernel not prepared");
        let d = self.geom.d;
        let mut out = Vec::with_capacity(d);
        let mut c = 0;
        while c < d {
            let i = Complex64::new(0.0, 1.0);
            let mut buf: Vec<Complex64> = if c + 1 < d {
                spec.iter()
                    .zip(&self.gradient_hat[c])
                    .zip(&self.gradient_hat[c + 1])
                    .map(|((s, k1), k2)| s * k1 + i * (s * k2))
                    .collect()
            } else {
                spec.iter().zip(&self.gradient_hat[c]).map(|(s, k)| s * k).collect()
            };
            self.plan.inverse(&mut buf);
            let (re, im) = self.extract(&buf);
            out.push(re);
            if c + 1 < d {
                out.push(im);
            }
            c += 2;
        }
        out
    }

    /// `Σ_c ∂_c g * w_c` at the nodes.
    pub fn gradient_dot(&self, w: &[Vec<f64>]) -> Vec<f64> {
        assert!(!self.gradient_hat.is_empty(), "gradient kernel not prepared");
        let len = self.plan.len();
        let mut acc = vec![Complex64::default(); len];
        let mut c = 0;
        while c < w.len() {
            if c + 1 < w.len() {
                let (fa, fb) = self.spectrum_pair(&w[c], &w[c + 1]);
                for k in 0..len {
                    acc[k] += fa[k] * self.gradient_hat[c][k] + fb[k] * self.gradient_hat[c + 1][k];
                }
                c += 2;
            } else {
                let fa = self.spectrum(&w[c]);
                for k in 0..len {
                    acc[k] += fa[k] * self.gradient_hat[c][k];
                }
                c += 1;
            }
        }
        self.plan.inverse(&mut acc);
        self.extract(&acc).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_potential(geom: &GridGeometry, conv: &Convolver, f: &[f64]) -> Vec<f64> {
        let d = geom.d;
        let mut ii = vec![0usize; d];
        let mut jj = vec![0usize; d];
        (0..geom.len())
            .map(|i| {
                geom.unflatten(i, &mut ii);
                (0..geom.len())
                    .map(|j| {
                        geom.unflatten(j, &mut jj);
                        let lag: Vec<i64> = ii.iter().zip(&jj).map(|(a, b)| *a as i64 - *b as i64).collect();
                        conv.potential_weight(&lag) * f[j]
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn fft_matches_direct_sum() {
        for d in 1..=3 {
            let n = [16, 8, 4][d - 1];
            let geom = GridGeometry::new(d, n, 2.0).unwrap();
            let conv = Convolver::new(geom, 0.5, KernelSet::ALL);
            let f: Vec<f64> = (0..geom.len()).map(|i| ((i * 7 % 11) as f64).sin() + 1.2).collect();
            let fast = conv.potential(&f);
            let slow = direct_potential(&geom, &conv, &f);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-11 * b.abs().max(1.0));
            }
            let g = conv.gradient(&f);
            assert_eq!(g.len(), d);
            let w: Vec<Vec<f64>> = (0..d).map(|c| f.iter().map(|x| x * (c as f64 + 0.5)).collect()).collect();
            let dot = conv.gradient_dot(&w);
            for (k, v) in dot.iter().enumerate() {
                let expect: f64 = (0..d).map(|c| (c as f64 + 0.5) * g[c][k]).sum();
                assert!((v - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn hat_weights_series_matches_closed_form() {
        for s in [0.0, 0.4] {
            let h = 0.013;
            for j in [64i64, 100, -70] {
                let a = j as f64 * h;
                let exact = (g_second_antiderivative(s, a + h) - 2.0 * g_second_antiderivative(s, a)
                    + g_second_antiderivative(s, a - h))
                    / h;
                let series = hat_weight_potential(s, h, j);
                assert!((exact - series).abs() < 1e-10 * series.abs().max(h));
            }
        }
    }

    #[test]
    fn origin_average_closed_form_1d_and_quadrature_2d() {
        let h = 0.2;
        assert!((origin_cell_average(1, 0.0, h) - (1.0 - (0.1f64).ln())).abs() < 1e-14);
        // Brute-force midpoint oracle on a fine sub-grid avoiding the origin.
        let m = 2000;
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                let x = -0.1 + (i as f64 + 0.5) * h / m as f64;
                let y = -0.1 + (j as f64 + 0.5) * h / m as f64;
                acc += -(x * x + y * y).sqrt().ln();
            }
        }
        acc /= (m * m) as f64;
        assert!((origin_cell_average(2, 0.0, h) - acc).abs() < 1e-5);
    }

    #[test]
    fn pair_mean_power_matches_monte_carlo_free_oracle() {
        // d = 1: E|u−w|^{-s} = 2 h^{-s} / ((1−s)(2−s)).
        let s: f64 = 0.3;
        let h: f64 = 0.5;
        let exact = 2.0 * h.powf(-s) / ((1.0 - s) * (2.0 - s));
        assert!((cell_pair_mean_power(1, s, h) - exact).abs() < 1e-12);
    }
}
