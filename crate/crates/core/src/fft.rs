//! Multi-dimensional complex FFTs on cubic arrays built from rustfft line transforms.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward and inverse plans for a `p^d` array.
#[derive(Clone)]
pub struct FftNd {
    pub p: usize,
    pub d: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FftNd(p={}, d={})", self.p, self.d)
    }
}

impl FftNd {
    pub fn new(p: usize, d: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            p,
            d,
            forward: planner.plan_fft_forward(p),
            inverse: planner.plan_fft_inverse(p),
        }
    }

    pub fn len(&self) -> usize {
        self.p.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.forward);
    }

    /// Inverse transform including the `1/p^d` normalization.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.transform(buf, &self.inverse);
        let scale = 1.0 / self.len() as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let p = self.p;
        let total = self.len();
        assert_eq!(buf.len(), total);
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        // Last axis is contiguous.
        for line in buf.chunks_exact_mut(p) {
            plan.process_with_scratch(line, &mut scratch);
        }
        let mut tmp = vec![Complex64::default(); p];
        for axis in 0..self.d.saturating_sub(1) {
            let stride = p.pow((self.d - 1 - axis) as u32);
            let block = stride * p;
            for start in (0..total).step_by(block) {
                for offset in 0..stride {
                    let base = start + offset;
                    for (k, t) in tmp.iter_mut().enumerate() {
                        *t = buf[base + k * stride];
                    }
                    plan.process_with_scratch(&mut tmp, &mut scratch);
                    for (k, t) in tmp.iter().enumerate() {
                        buf[base + k * stride] = *t;
                    }
                }
            }
        }
    }

    /// Signed integer frequency index of position `k` along an axis.
    pub fn freq_index(&self, k: usize) -> i64 {
        let p = self.p as i64;
        let k = k as i64;
        if k <= p / 2 {
            k
        } else {
            k - p
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dft_nd(input: &[Complex64], p: usize, d: usize) -> Vec<Complex64> {
        let total = p.pow(d as u32);
        let idx = |mut i: usize| {
            let mut v = vec![0usize; d];
            for a in (0..d).rev() {
                v[a] = i % p;
                i /= p;
            }
            v
        };
        (0..total)
            .map(|k| {
                let kv = idx(k);
                let mut acc = Complex64::default();
                for (j, x) in input.iter().enumerate() {
                    let jv = idx(j);
                    let phase: f64 = kv.iter().zip(&jv).map(|(a, b)| (a * b) as f64).sum::<f64>();
                    let ang = -2.0 * std::f64::consts::PI * phase / p as f64;
                    acc += x * Complex64::new(ang.cos(), ang.sin());
                }
                acc
            })
            .collect()
    }

    #[test]
    fn matches_dense_dft() {
        for (p, d) in [(8, 1), (6, 2), (4, 3)] {
            let plan = FftNd::new(p, d);
            let input: Vec<Complex64> = (0..plan.len())
                .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
                .collect();
            let mut buf = input.clone();
            plan.forward(&mut buf);
            let oracle = dft_nd(&input, p, d);
            for (a, b) in buf.iter().zip(&oracle) {
                assert!((a - b).norm() < 1e-10);
            }
            plan.inverse(&mut buf);
            for (a, b) in buf.iter().zip(&input) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }
}
