//! Grid solver for the mean-field equation in original and self-similar coordinates.
//!
//! Original: `∂_t μ = −div(μ k*μ) + (1/β) Δμ`.
//! Self-similar: `∂_τ μ̄ = −div(μ̄ (k_τ*μ̄ − ξ/2)) + (1/β) Δμ̄`.
//!
//! Each step is a Strang splitting: half a linear step, a full transport step
//! for the interaction velocity, half a linear step. The linear part is the
//! exact semigroup of the periodic three-point Laplacian, applied in Fourier
//! space, in original coordinates (it is entrywise nonnegative) and the
//! Scharfetter–Gummel Fokker–Planck line operator with TR-BDF2 in
//! self-similar coordinates (axes commute, so the axis sweep is exact).
//! Transport is MUSCL with the van Leer limiter and SSP-RK2, with no-flux
//! walls.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::conv::{Convolver, KernelSet};
use crate::equilibrium::gaussian_equilibrium;
use crate::error::{MfclError, Result};
use crate::fft::FftNd;
use crate::functionals::commutator::{fractional_norm, spectral_norm, VectorField};
use crate::fv::{LineOperator, TrBdf2Work};
use crate::grid::{GridDensity, GridGeometry};
use crate::kernels::InteractionSpec;
use crate::transforms::Coords;

/// Default CFL number.
pub const CFL: f64 = 0.4;
/// Negative values below this are an error; smaller ones are clipped.
pub const NEGATIVE_TOLERANCE: f64 = -1e-14;
/// Mask threshold on `max(μ̄, μ̄_β)`.
pub const MASK_THRESHOLD: f64 = 1e-10;
/// Both densities must exceed this floor on the mask.
pub const DENSITY_FLOOR: f64 = 1e-13;

/// Treatment of the interaction transport term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportMode {
    /// Full nonlinear transport.
    Full,
    /// Antisymmetric drift with isotropic data: the nonlinear term vanishes
    /// identically and the equation is the linear Fokker–Planck (or heat) equation.
    Radial,
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeOptions {
    pub transport: TransportMode,
    pub cfl: f64,
}

impl Default for PdeOptions {
    fn default() -> Self {
        Self { transport: TransportMode::Full, cfl: CFL }
    }
}

/// A density at a time, with the nominal step size.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeState {
    pub spec: InteractionSpec,
    pub coords: Coords,
    /// `t` in original coordinates, `τ` in self-similar coordinates.
    pub time: f64,
    pub density: GridDensity,
    pub dt: f64,
}

impl PdeState {
    pub fn new(spec: InteractionSpec, coords: Coords, time: f64, density: GridDensity, dt: f64) -> Result<Self> {
        if density.d() != spec.d {
            return Err(MfclError::Domain("density dimension differs from spec".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(MfclError::Domain(format!("dt = {dt}")));
        }
        if !(time >= 0.0 && time.is_finite()) {
            return Err(MfclError::Domain(format!("time = {time}")));
        }
        Ok(Self { spec, coords, time, density, dt })
    }
}

enum Linear {
    None,
    Heat { plan: FftNd, k2: Vec<f64> },
    FokkerPlanck { line: LineOperator },
}

/// Precomputed operators for one spec, frame and grid.
pub struct PdeSolver {
    pub spec: InteractionSpec,
    pub coords: Coords,
    pub geom: GridGeometry,
    pub options: PdeOptions,
    conv: Option<Convolver>,
    matrix: Vec<f64>,
    linear: Linear,
    coords_cache: Vec<Vec<f64>>,
}

impl std::fmt::Debug for PdeSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PdeSolver")
            .field("spec", &self.spec)
            .field("coords", &self.coords)
            .field("geom", &self.geom)
            .field("options", &self.options)
            .finish()
    }
}

fn van_leer(a: f64, b: f64) -> f64 {
    if a * b > 0.0 {
        2.0 * a * b / (a + b)
    } else {
        0.0
    }
}

impl PdeSolver {
    pub fn new(spec: &InteractionSpec, coords: Coords, geom: GridGeometry, options: PdeOptions) -> Result<Self> {
        if geom.d != spec.d {
            return Err(MfclError::Domain("grid dimension differs from spec".into()));
        }
        if geom.d > 2 {
            return Err(MfclError::Unsupported("grid PDE solver in dimension 3".into()));
        }
        if !(options.cfl > 0.0 && options.cfl <= 0.5) {
            return Err(MfclError::Domain(format!("CFL number {}", options.cfl)));
        }
        if options.transport == TransportMode::Radial && !spec.is_antisymmetric() {
            return Err(MfclError::InvalidSpec("the radial reduction needs an antisymmetric drift".into()));
        }
        let d = geom.d;
        let n = geom.n;
        let linear = if spec.is_zero_temperature() {
            Linear::None
        } else {
            match coords {
                Coords::Original => {
                    let plan = FftNd::new(n, d);
                    let h = geom.h();
                    let mut idx = vec![0usize; d];
                    // Symbol of the periodic three-point Laplacian.
                    let k2 = (0..geom.len())
                        .map(|k| {
                            geom.unflatten(k, &mut idx);
                            idx.iter()
                                .map(|&i| {
                                    let theta = std::f64::consts::PI * plan.freq_index(i) as f64 / n as f64;
                                    (2.0 * theta.sin() / h).powi(2)
                                })
                                .sum()
                        })
                        .collect();
                    Linear::Heat { plan, k2 }
                }
                Coords::SelfSimilar => {
                    let h = geom.h();
                    let beta = spec.beta;
                    let phi: Vec<f64> = (0..n).map(|i| beta * geom.coord(i).powi(2) / 4.0).collect();
                    let cond = vec![1.0 / (beta * h); n - 1];
                    Linear::FokkerPlanck { line: LineOperator::scharfetter_gummel(vec![h; n], &phi, &cond) }
                }
            }
        };
        let conv = match options.transport {
            TransportMode::Full => Some(Convolver::new(geom, spec.s, KernelSet::GRADIENT)),
            TransportMode::Radial => None,
        };
        let coords_cache = (0..d)
            .map(|a| {
                let mut idx = vec![0usize; d];
                (0..geom.len())
                    .map(|k| {
                        geom.unflatten(k, &mut idx);
                        geom.coord(idx[a])
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            coords,
            geom,
            options,
            conv,
            matrix: spec.drift_matrix(),
            linear,
            coords_cache,
        })
    }

    /// Initial state on the solver grid.
    pub fn state(&self, time: f64, density: GridDensity, dt: f64) -> Result<PdeState> {
        self.check_grid(&density)?;
        PdeState::new(self.spec.clone(), self.coords, time, density, dt)
    }

    fn check_grid(&self, mu: &GridDensity) -> Result<()> {
        if mu.geom != self.geom {
            return Err(MfclError::Domain("density lives on a different grid than the solver".into()));
        }
        Ok(())
    }

    fn check_state(&self, state: &PdeState) -> Result<()> {
        self.check_grid(&state.density)?;
        if state.coords != self.coords || state.spec != self.spec {
            return Err(MfclError::Domain("state was built for a different solver".into()));
        }
        Ok(())
    }

    /// `e^{−sτ/2}` in self-similar coordinates, 1 in original coordinates.
    fn kernel_factor(&self, time: f64) -> f64 {
        match self.coords {
            Coords::Original => 1.0,
            Coords::SelfSimilar => self.spec.tau_factor(time),
        }
    }

    /// `k_τ * μ` (or `k * μ`) at the nodes, one array per component.
    pub fn interaction_velocity(&self, mu: &[f64], time: f64) -> Vec<Vec<f64>> {
        let d = self.geom.d;
        let len = self.geom.len();
        let Some(conv) = &self.conv else {
            return vec![vec![0.0; len]; d];
        };
        let grad = conv.gradient(mu);
        let f = self.kernel_factor(time);
        (0..d)
            .map(|a| {
                (0..len)
                    .map(|k| f * (0..d).map(|b| self.matrix[a * d + b] * grad[b][k]).sum::<f64>())
                    .collect()
            })
            .collect()
    }

    /// Velocity handled by the transport stage.
    fn transport_velocity(&self, mu: &[f64], time: f64) -> Vec<Vec<f64>> {
        let mut u = self.interaction_velocity(mu, time);
        if self.coords == Coords::SelfSimilar && matches!(self.linear, Linear::None) {
            for (ua, xa) in u.iter_mut().zip(&self.coords_cache) {
                for (v, x) in ua.iter_mut().zip(xa) {
                    *v -= 0.5 * x;
                }
            }
        }
        u
    }

    fn has_transport(&self) -> bool {
        self.conv.is_some() || (self.coords == Coords::SelfSimilar && matches!(self.linear, Linear::None))
    }

    fn max_speed(u: &[Vec<f64>]) -> f64 {
        let len = u.first().map_or(0, |c| c.len());
        (0..len).map(|k| u.iter().map(|c| c[k].abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// Largest stable step for the current state (`∞` without transport).
    pub fn cfl_limit(&self, state: &PdeState) -> Result<f64> {
        self.check_state(state)?;
        if !self.has_transport() {
            return Ok(f64::INFINITY);
        }
        let u = self.transport_velocity(&state.density.values, state.time);
        let speed = Self::max_speed(&u);
        Ok(if speed == 0.0 { f64::INFINITY } else { self.options.cfl * self.geom.h() / speed })
    }

    /// `−div(μ u)` with MUSCL fluxes.
    fn transport_rhs(&self, mu: &[f64], u: &[Vec<f64>], out: &mut [f64]) {
        let g = self.geom;
        let n = g.n;
        let h = g.h();
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut idx = vec![0usize; g.d];
        for a in 0..g.d {
            let st = g.stride(a);
            let slope = |k: usize, i: usize| -> f64 {
                if i == 0 || i == n - 1 {
                    0.0
                } else {
                    van_leer(mu[k] - mu[k - st], mu[k + st] - mu[k])
                }
            };
            for k in 0..g.len() {
                g.unflatten(k, &mut idx);
                let i = idx[a];
                if i + 1 == n {
                    continue;
                }
                let r = k + st;
                let vf = 0.5 * (u[a][k] + u[a][r]);
                let flux = if vf >= 0.0 {
                    vf * (mu[k] + 0.5 * slope(k, i))
                } else {
                    vf * (mu[r] - 0.5 * slope(r, i + 1))
                };
                out[k] -= flux / h;
                out[r] += flux / h;
            }
        }
    }

    /// SSP-RK2 transport over `dt` starting at `time`.
    fn transport(&self, mu: &mut [f64], time: f64, dt: f64) {
        let len = mu.len();
        let mut rhs = vec![0.0; len];
        let u0 = self.transport_velocity(mu, time);
        self.transport_rhs(mu, &u0, &mut rhs);
        let stage: Vec<f64> = mu.iter().zip(&rhs).map(|(m, r)| m + dt * r).collect();
        let u1 = self.transport_velocity(&stage, time + dt);
        self.transport_rhs(&stage, &u1, &mut rhs);
        for k in 0..len {
            mu[k] = 0.5 * mu[k] + 0.5 * (stage[k] + dt * rhs[k]);
        }
    }

    /// Linear part over `dt`.
    fn linear(&self, mu: &mut [f64], dt: f64) {
        match &self.linear {
            Linear::None => {}
            Linear::Heat { plan, k2 } => {
                let diff = self.spec.diffusion();
                let mut buf: Vec<Complex64> = mu.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                plan.forward(&mut buf);
                for (b, k) in buf.iter_mut().zip(k2) {
                    *b *= (-diff * k * dt).exp();
                }
                plan.inverse(&mut buf);
                for (m, b) in mu.iter_mut().zip(&buf) {
                    *m = b.re;
                }
            }
            Linear::FokkerPlanck { line } => {
                let g = self.geom;
                let n = g.n;
                let mut work = TrBdf2Work::default();
                let mut buf = vec![0.0; n];
                let mut idx = vec![0usize; g.d];
                for a in 0..g.d {
                    let st = g.stride(a);
                    for k in 0..g.len() {
                        g.unflatten(k, &mut idx);
                        if idx[a] != 0 {
                            continue;
                        }
                        for (i, b) in buf.iter_mut().enumerate() {
                            *b = mu[k + i * st];
                        }
                        line.tr_bdf2(&mut buf, dt, &mut work);
                        for (i, b) in buf.iter().enumerate() {
                            mu[k + i * st] = *b;
                        }
                    }
                }
            }
        }
    }

    /// One Strang step of size `dt` (defaults to `state.dt`); fails on a CFL violation.
    pub fn step_by(&self, state: &PdeState, dt: f64) -> Result<PdeState> {
        self.check_state(state)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(MfclError::Domain(format!("dt = {dt}")));
        }
        let limit = self.cfl_limit(state)?;
        if dt > limit {
            return Err(MfclError::Cfl { dt, limit });
        }
        let mass0 = state.density.mass();
        let mut mu = state.density.values.clone();
        self.linear(&mut mu, 0.5 * dt);
        if self.has_transport() {
            self.transport(&mut mu, state.time, dt);
        }
        self.linear(&mut mu, 0.5 * dt);
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(MfclError::NonFinite(format!("density at time {}", state.time + dt)));
        }
        if let Some(v) = mu.iter().find(|v| **v < NEGATIVE_TOLERANCE) {
            return Err(MfclError::Invariant(format!("negative density {v:e} at time {}", state.time + dt)));
        }
        let clipped = mu.iter().any(|v| *v < 0.0);
        mu.iter_mut().for_each(|v| *v = v.max(0.0));
        let mut density = GridDensity::new(self.geom, mu)?;
        if clipped {
            let m = density.mass();
            density.values.iter_mut().for_each(|v| *v *= mass0 / m);
        }
        Ok(PdeState { density, time: state.time + dt, ..state.clone() })
    }

    /// One step of the nominal size.
    pub fn step(&self, state: &PdeState) -> Result<PdeState> {
        self.step_by(state, state.dt)
    }

    /// Advances by `dt`, splitting into equal CFL-compliant sub-steps.
    pub fn advance(&self, state: &PdeState, dt: f64) -> Result<PdeState> {
        let mut cur = state.clone();
        let end = state.time + dt;
        loop {
            let remaining = end - cur.time;
            if remaining <= 1e-12 * dt.max(1.0) {
                break;
            }
            let limit = self.cfl_limit(&cur)?;
            let pieces = (remaining / limit).ceil().max(1.0);
            let h = remaining / pieces;
            cur = self.step_by(&cur, h)?;
        }
        cur.time = end;
        Ok(cur)
    }

    /// States at `state.time + c` for each checkpoint offset `c ∈ [0, horizon]`.
    pub fn solve(&self, state: &PdeState, horizon: f64, checkpoints: &[f64]) -> Result<Vec<PdeState>> {
        self.check_state(state)?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(MfclError::Domain(format!("horizon {horizon}")));
        }
        if let Some(c) = checkpoints.iter().find(|c| !(**c >= 0.0 && **c <= horizon)) {
            return Err(MfclError::Domain(format!("checkpoint {c} outside [0, {horizon}]")));
        }
        if checkpoints.windows(2).any(|w| w[1] < w[0]) {
            return Err(MfclError::Domain("checkpoints must be sorted".into()));
        }
        let t0 = state.time;
        let mut cur = state.clone();
        let mut out = Vec::with_capacity(checkpoints.len());
        for &c in checkpoints {
            let target = t0 + c;
            while target - cur.time > 1e-12 * target.max(1.0) {
                let h = state.dt.min(target - cur.time);
                cur = self.advance(&cur, h)?;
            }
            out.push(cur.clone());
        }
        Ok(out)
    }

    /// L¹ norm of the transport term `div(μ k*μ)` as the full scheme would compute it.
    /// Zero in exact arithmetic under the radial reduction.
    pub fn transport_defect(&self, state: &PdeState) -> Result<f64> {
        self.check_state(state)?;
        let conv = Convolver::new(self.geom, self.spec.s, KernelSet::GRADIENT);
        let grad = conv.gradient(&state.density.values);
        let d = self.geom.d;
        let f = self.kernel_factor(state.time);
        let u: Vec<Vec<f64>> = (0..d)
            .map(|a| {
                (0..self.geom.len())
                    .map(|k| f * (0..d).map(|b| self.matrix[a * d + b] * grad[b][k]).sum::<f64>())
                    .collect()
            })
            .collect();
        let mut rhs = vec![0.0; self.geom.len()];
        self.transport_rhs(&state.density.values, &u, &mut rhs);
        Ok(rhs.iter().map(|v| v.abs()).sum::<f64>() * self.geom.cell_volume())
    }
}

/// Evaluation mask: `max(μ̄, μ̄_β) > 1e−10` and both above `1e−13`.
pub fn evaluation_mask(mu: &GridDensity, eq: &GridDensity) -> Result<Vec<bool>> {
    mu.check_same_grid(eq)?;
    let mask: Vec<bool> = mu
        .values
        .iter()
        .zip(&eq.values)
        .map(|(&a, &b)| a.max(b) > MASK_THRESHOLD && a > DENSITY_FLOOR && b > DENSITY_FLOOR)
        .collect();
    if !mask.iter().any(|m| *m) {
        return Err(MfclError::EmptyMask);
    }
    Ok(mask)
}

/// Mask nodes whose full `3^d` neighbourhood lies in the mask.
fn interior(geom: &GridGeometry, mask: &[bool]) -> Vec<bool> {
    let d = geom.d;
    let n = geom.n;
    let mut idx = vec![0usize; d];
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(d as u32))
        .map(|c| (0..d).map(|a| (c / 3usize.pow(a as u32) % 3) as i64 - 1).collect())
        .collect();
    (0..geom.len())
        .map(|k| {
            if !mask[k] {
                return false;
            }
            geom.unflatten(k, &mut idx);
            if idx.iter().any(|&i| i == 0 || i == n - 1) {
                return false;
            }
            offsets.iter().all(|o| {
                let j: i64 = (0..d).map(|a| o[a] * geom.stride(a) as i64).sum();
                mask[(k as i64 + j) as usize]
            })
        })
        .collect()
}

/// Derivative fields of `w = log(μ̄/μ̄_β)` on the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRatioFields {
    pub mask: Vec<bool>,
    /// Nodes where centred stencils stay inside the mask.
    pub interior: Vec<bool>,
    /// `w` on the mask, 0 elsewhere.
    pub w: Vec<f64>,
    /// `∇w` on the interior, 0 elsewhere.
    pub grad_w: Vec<Vec<f64>>,
    pub grad_w_sup: f64,
    pub hess_w_sup: f64,
    /// `sup |log(μ̄/μ̄_β^∞)|` over its own mask.
    pub log_ratio_sup: f64,
}

fn log_ratio(mu: &GridDensity, eq: &GridDensity, mask: &[bool]) -> Vec<f64> {
    mu.values
        .iter()
        .zip(&eq.values)
        .zip(mask)
        .map(|((a, b), &m)| if m { (a / b).ln() } else { 0.0 })
        .collect()
}

/// `w`, `∇w`, `sup|∇w|`, `sup‖∇²w‖` and `sup|log(μ̄/μ̄_β^∞)|`.
pub fn log_ratio_fields(state: &PdeState, eq: &GridDensity) -> Result<LogRatioFields> {
    let mu = &state.density;
    let geom = mu.geom;
    let d = geom.d;
    let h = geom.h();
    let mask = evaluation_mask(mu, eq)?;
    let inner = interior(&geom, &mask);
    if !inner.iter().any(|m| *m) {
        return Err(MfclError::EmptyMask);
    }
    let w = log_ratio(mu, eq, &mask);
    let mut grad_w = vec![vec![0.0; geom.len()]; d];
    let mut grad_w_sup = 0.0f64;
    let mut hess_w_sup = 0.0f64;
    let mut hess = vec![0.0; d * d];
    for k in 0..geom.len() {
        if !inner[k] {
            continue;
        }
        let mut g2 = 0.0;
        for a in 0..d {
            let sa = geom.stride(a);
            let ga = (w[k + sa] - w[k - sa]) / (2.0 * h);
            grad_w[a][k] = ga;
            g2 += ga * ga;
            for b in 0..d {
                let sb = geom.stride(b);
                hess[a * d + b] = if a == b {
                    (w[k + sa] - 2.0 * w[k] + w[k - sa]) / (h * h)
                } else {
                    (w[k + sa + sb] - w[k + sa - sb] - w[k - sa + sb] + w[k - sa - sb]) / (4.0 * h * h)
                };
            }
        }
        grad_w_sup = grad_w_sup.max(g2.sqrt());
        hess_w_sup = hess_w_sup.max(spectral_norm(&hess, d));
    }
    let gauss = gaussian_equilibrium(&state.spec, geom)?;
    let gmask = evaluation_mask(mu, &gauss)?;
    let log_ratio_sup = log_ratio(mu, &gauss, &gmask).iter().map(|v| v.abs()).fold(0.0, f64::max);
    Ok(LogRatioFields { mask, interior: inner, w, grad_w, grad_w_sup, hess_w_sup, log_ratio_sup })
}

/// The field `ū` and its seminorm.
#[derive(Debug, Clone, PartialEq)]
pub struct UbarField {
    /// `ū` on the interior of the mask, 0 elsewhere.
    pub field: VectorField,
    /// `‖∇ū‖_∞` over nodes whose stencil lies in the interior.
    pub grad_sup: f64,
    /// Fractional term, present when `s < d − 2`.
    pub fractional: Option<f64>,
    pub star_norm: f64,
    /// The field does not decay towards the mask boundary, so the fractional
    /// term on the truncated grid is unreliable.
    pub tail_warning: bool,
}

/// Gradient drift: `ū = (1/β)∇w + ∇g*(μ̄ − μ̄_β)`; antisymmetric: `ū = M∇w + k_τ*(μ̄ − μ̄_β)`.
pub fn ubar_field(state: &PdeState, eq: &GridDensity) -> Result<UbarField> {
    let spec = &state.spec;
    let lr = log_ratio_fields(state, eq)?;
    let geom = state.density.geom;
    let d = geom.d;
    let len = geom.len();
    let diffv: Vec<f64> = state.density.values.iter().zip(&eq.values).map(|(a, b)| a - b).collect();
    let conv = Convolver::new(geom, spec.s, KernelSet::GRADIENT);
    let gd = conv.gradient(&diffv);
    let m = spec.drift_matrix();
    let mut comps = vec![vec![0.0; len]; d];
    for k in 0..len {
        if !lr.interior[k] {
            continue;
        }
        for a in 0..d {
            comps[a][k] = if spec.is_gradient() {
                spec.diffusion() * lr.grad_w[a][k] + gd[a][k]
            } else {
                let f = match state.coords {
                    Coords::Original => 1.0,
                    Coords::SelfSimilar => spec.tau_factor(state.time),
                };
                (0..d).map(|b| m[a * d + b] * (lr.grad_w[b][k] + f * gd[b][k])).sum()
            };
        }
    }
    let field = VectorField::new(geom, comps)?;
    let inner2 = interior(&geom, &lr.interior);
    let jac = field.jacobian();
    let mut mat = vec![0.0; d * d];
    let mut grad_sup = 0.0f64;
    for k in 0..len {
        if !inner2[k] {
            continue;
        }
        for a in 0..d {
            for b in 0..d {
                mat[a * d + b] = jac[a][b][k];
            }
        }
        grad_sup = grad_sup.max(spectral_norm(&mat, d));
    }
    let peak = (0..len)
        .filter(|&k| lr.interior[k])
        .map(|k| (0..d).map(|a| field.comps[a][k].powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let edge = (0..len)
        .filter(|&k| lr.interior[k] && !inner2[k])
        .map(|k| (0..d).map(|a| field.comps[a][k].powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let fractional = if spec.is_super_coulomb() { None } else { Some(fractional_norm(spec, &field)?) };
    let tail_warning = fractional.is_some() && edge > 1e-3 * peak;
    Ok(UbarField { star_norm: grad_sup + fractional.unwrap_or(0.0), field, grad_sup, fractional, tail_warning })
}

/// Grid `L^p` norm of the density (`p = ∞` allowed).
pub fn lp_norm_monitor(state: &PdeState, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(MfclError::Domain(format!("p = {p} below 1")));
    }
    Ok(state.density.lp_norm(p))
}

/// `e^{−(dτ/2)(1−1/p)} ‖μ̄^τ‖_p` in self-similar coordinates; the plain norm in original ones.
pub fn scaled_lp_norm(state: &PdeState, p: f64) -> Result<f64> {
    let norm = lp_norm_monitor(state, p)?;
    Ok(match state.coords {
        Coords::Original => norm,
        Coords::SelfSimilar => {
            let inv = if p.is_infinite() { 0.0 } else { 1.0 / p };
            norm * (-(state.density.d() as f64) * state.time / 2.0 * (1.0 - inv)).exp()
        }
    })
}

/// Right-hand side of the evolution equation of `w = log(μ̄/μ̄_β^τ)`,
///
/// `∂_τ w = (1/β)(Δw + |∇w|² + ∇log μ̄_β·∇w) − (∇w + ∇log μ̄_β)·(k_τ*μ̄ + ∇g_τ*μ̄_β)
///          − div(k_τ*μ̄) − Δg_τ*μ̄_β − ∂_τ log μ̄_β`,
///
/// on the nodes two cells inside the mask (0 elsewhere). `dlog_eq` is
/// `∂_τ log μ̄_β^τ`, zero when omitted.
pub fn w_equation_rhs(state: &PdeState, eq: &GridDensity, dlog_eq: Option<&[f64]>) -> Result<(Vec<f64>, Vec<bool>)> {
    if state.coords != Coords::SelfSimilar {
        return Err(MfclError::Domain("the w-equation is posed in self-similar coordinates".into()));
    }
    let spec = &state.spec;
    let beta = spec.beta;
    if spec.is_zero_temperature() {
        return Err(MfclError::ZeroTemperature("the w-equation"));
    }
    let lr = log_ratio_fields(state, eq)?;
    let geom = state.density.geom;
    let d = geom.d;
    let h = geom.h();
    let len = geom.len();
    let inner2 = interior(&geom, &lr.interior);
    let f = spec.tau_factor(state.time);
    let conv = Convolver::new(geom, spec.s, KernelSet::GRADIENT);
    let g_mu = conv.gradient(&state.density.values);
    let g_eq = conv.gradient(&eq.values);
    let m = spec.drift_matrix();
    let k_mu: Vec<Vec<f64>> = (0..d)
        .map(|a| (0..len).map(|k| f * (0..d).map(|b| m[a * d + b] * g_mu[b][k]).sum::<f64>()).collect())
        .collect();
    let log_eq: Vec<f64> = eq.values.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
    let partial = |field: &[f64], a: usize, k: usize| {
        let s = geom.stride(a);
        (field[k + s] - field[k - s]) / (2.0 * h)
    };
    let mut out = vec![0.0; len];
    for k in 0..len {
        if !inner2[k] {
            continue;
        }
        let mut lap_w = 0.0;
        let mut grad_w2 = 0.0;
        let mut drift = 0.0;
        let mut adv = 0.0;
        let mut div_k = 0.0;
        let mut lap_geq = 0.0;
        for a in 0..d {
            let s = geom.stride(a);
            lap_w += (lr.w[k + s] - 2.0 * lr.w[k] + lr.w[k - s]) / (h * h);
            let gw = lr.grad_w[a][k];
            let gl = partial(&log_eq, a, k);
            grad_w2 += gw * gw;
            drift += gl * gw;
            adv += (gw + gl) * (k_mu[a][k] + f * g_eq[a][k]);
            div_k += partial(&k_mu[a], a, k);
            lap_geq += f * partial(&g_eq[a], a, k);
        }
        let dt_eq = dlog_eq.map_or(0.0, |v| v[k]);
        out[k] = (lap_w + grad_w2 + drift) / beta - adv - div_k - lap_geq - dt_eq;
    }
    Ok((out, inner2))
}
