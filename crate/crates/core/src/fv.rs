//! One-dimensional conservative finite-volume operators.
//!
//! The linear Fokker–Planck flux `J = -D (∂μ + μ ∂φ)` is discretized with the
//! Scharfetter–Gummel exponential fitting, which keeps `e^{-φ}` as an exact
//! discrete steady state. Time stepping is TR-BDF2, L-stable and mass
//! conserving. The same line operator serves Cartesian axes and radial shells.

/// Bernoulli function `x / (e^x − 1)`.
pub fn bernoulli(x: f64) -> f64 {
    if x.abs() < 1e-5 {
        1.0 - x / 2.0 + x * x / 12.0
    } else {
        x / x.exp_m1()
    }
}

/// Tridiagonal operator `L` with `(Lμ)_i = lower_i μ_{i-1} + diag_i μ_i + upper_i μ_{i+1}`
/// and cell measures `vol`, representing `vol · dμ/dt = L μ`.
#[derive(Debug, Clone)]
pub struct LineOperator {
    pub vol: Vec<f64>,
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LineOperator {
    /// Scharfetter–Gummel operator with no-flux ends.
    ///
    /// `phi` holds the potential at cell centres, `conductance[f]` is
    /// `D · area / spacing` for the face between cells `f` and `f + 1`.
    pub fn scharfetter_gummel(vol: Vec<f64>, phi: &[f64], conductance: &[f64]) -> Self {
        let n = vol.len();
        assert_eq!(phi.len(), n);
        assert_eq!(conductance.len(), n - 1);
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for f in 0..n - 1 {
            let dphi = phi[f + 1] - phi[f];
            let c = conductance[f];
            // Flux out of cell f through the face: c [B(Δφ) μ_f − B(−Δφ) μ_{f+1}].
            let a = c * bernoulli(dphi);
            let b = c * bernoulli(-dphi);
            diag[f] -= a;
            upper[f] += b;
            diag[f + 1] -= b;
            lower[f + 1] += a;
        }
        Self { vol, lower, diag, upper }
    }

    pub fn len(&self) -> usize {
        self.vol.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vol.is_empty()
    }

    /// `L μ`.
    pub fn apply(&self, mu: &[f64], out: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let mut v = self.diag[i] * mu[i];
            if i > 0 {
                v += self.lower[i] * mu[i - 1];
            }
            if i + 1 < n {
                v += self.upper[i] * mu[i + 1];
            }
            out[i] = v;
        }
    }

    /// Solves `(vol − c L) x = rhs` in place of `rhs`.
    pub fn solve_shifted(&self, c: f64, rhs: &mut [f64], scratch: &mut Vec<f64>) {
        let n = self.len();
        scratch.clear();
        scratch.resize(n, 0.0);
        // Thomas algorithm; the matrix is an M-matrix so no pivoting is needed.
        let b0 = self.vol[0] - c * self.diag[0];
        let mut denom = b0;
        scratch[0] = if n > 1 { -c * self.upper[0] / denom } else { 0.0 };
        rhs[0] /= denom;
        for i in 1..n {
            let a = -c * self.lower[i];
            let b = self.vol[i] - c * self.diag[i];
            denom = b - a * scratch[i - 1];
            if i + 1 < n {
                scratch[i] = -c * self.upper[i] / denom;
            }
            rhs[i] = (rhs[i] - a * rhs[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= scratch[i] * rhs[i + 1];
        }
    }

    /// One TR-BDF2 step of `vol · dμ/dt = L μ`.
    pub fn tr_bdf2(&self, mu: &mut [f64], dt: f64, work: &mut TrBdf2Work) {
        let gamma = 2.0 - std::f64::consts::SQRT_2;
        let n = self.len();
        work.resize(n);
        // Trapezoidal stage to t + γ dt.
        self.apply(mu, &mut work.lmu);
        for i in 0..n {
            work.stage[i] = self.vol[i] * mu[i] + 0.5 * gamma * dt * work.lmu[i];
        }
        self.solve_shifted(0.5 * gamma * dt, &mut work.stage, &mut work.scratch);
        // BDF2 stage to t + dt.
        let c2 = (1.0 - gamma) / (2.0 - gamma);
        let w1 = 1.0 / (gamma * (2.0 - gamma));
        let w0 = (1.0 - gamma).powi(2) / (gamma * (2.0 - gamma));
        for i in 0..n {
            mu[i] = self.vol[i] * (w1 * work.stage[i] - w0 * mu[i]);
        }
        self.solve_shifted(c2 * dt, mu, &mut work.scratch);
    }
}

/// Scratch buffers for [`LineOperator::tr_bdf2`].
#[derive(Debug, Clone, Default)]
pub struct TrBdf2Work {
    lmu: Vec<f64>,
    stage: Vec<f64>,
    scratch: Vec<f64>,
}

impl TrBdf2Work {
    fn resize(&mut self, n: usize) {
        self.lmu.resize(n, 0.0);
        self.stage.resize(n, 0.0);
    }
}
