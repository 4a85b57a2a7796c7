//! Right-hand sides of the Grönwall bounds, evaluated on measured traces.
//!
//! Traces are sampled at increasing self-similar times starting at 0 and are
//! interpolated linearly in between.

use serde::{Deserialize, Serialize};

use crate::error::{MfclError, Result};
use crate::functionals::corrections::{exponents, positivity_defect};
use crate::functionals::records::ConstantsConfig;
use crate::kernels::InteractionSpec;
use crate::quad::gauss_legendre;

/// Measured traces on a common time grid. Unused traces may be empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Traces {
    pub tau: Vec<f64>,
    /// `‖∇^{⊗2} log(μ̄/μ̄_β^∞)‖_∞`.
    #[serde(default)]
    pub hessian: Vec<f64>,
    /// `‖log(μ̄/μ̄_β^∞)‖_∞`.
    #[serde(default)]
    pub log_sup: Vec<f64>,
    /// `‖ū‖_*`.
    #[serde(default)]
    pub ubar_star: Vec<f64>,
    /// `‖μ̄‖_∞`.
    #[serde(default)]
    pub mu_sup: Vec<f64>,
}

/// Which bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GronwallVariant {
    /// Relative entropy, antisymmetric drift, `s = 0`.
    MainRe,
    /// Modulated free energy, antisymmetric drift, `s < d − 2`, no LSI.
    Mfe11,
    /// Modulated free energy, gradient drift, no LSI.
    Mfe12,
    /// Antisymmetric drift, `0 < s < d − 2`, with `κ`.
    Mfe21,
    /// Gradient drift with `κ = 1/(C_LS β)`.
    Mfe22,
}

/// Everything a bound needs besides the evaluation time.
#[derive(Debug, Clone)]
pub struct GronwallInputs<'a> {
    pub spec: &'a InteractionSpec,
    pub n: usize,
    /// Value of the bounded functional at time 0.
    pub initial: f64,
    pub traces: &'a Traces,
    pub constants: &'a ConstantsConfig,
    /// Required by [`GronwallVariant::Mfe21`] and [`GronwallVariant::Mfe22`].
    pub kappa: Option<f64>,
}

/// Piecewise-linear trace.
struct Pl<'a> {
    t: &'a [f64],
    y: &'a [f64],
}

impl<'a> Pl<'a> {
    fn new(t: &'a [f64], y: &'a [f64], name: &str) -> Result<Self> {
        if y.len() != t.len() {
            return Err(MfclError::Domain(format!("trace {name} has {} samples, expected {}", y.len(), t.len())));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(MfclError::NonFinite(format!("trace {name}")));
        }
        Ok(Self { t, y })
    }

    fn segment(&self, x: f64) -> usize {
        match self.t.iter().position(|&tk| tk > x) {
            Some(0) => 0,
            Some(k) => k - 1,
            None => self.t.len() - 2,
        }
    }

    fn at(&self, x: f64) -> f64 {
        let k = self.segment(x);
        let (a, b) = (self.t[k], self.t[k + 1]);
        let w = (x - a) / (b - a);
        self.y[k] + w * (self.y[k + 1] - self.y[k])
    }

    /// `∫_0^x y`, exact for the linear interpolant.
    fn integral(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.t.len() - 1 {
            let (a, b) = (self.t[k], self.t[k + 1]);
            if a >= x {
                break;
            }
            let e = b.min(x);
            acc += 0.5 * (self.y[k] + self.at_in(k, e)) * (e - a);
        }
        acc
    }

    fn at_in(&self, k: usize, x: f64) -> f64 {
        let (a, b) = (self.t[k], self.t[k + 1]);
        self.y[k] + (x - a) / (b - a) * (self.y[k + 1] - self.y[k])
    }

    /// Max of the interpolant on `[0, x]`.
    fn sup(&self, x: f64) -> f64 {
        self.y.iter().zip(self.t).filter(|(_, &t)| t <= x).map(|(y, _)| *y).fold(self.at(x), f64::max)
    }

    /// Min of the interpolant on `[0, x]`.
    fn inf(&self, x: f64) -> f64 {
        self.y.iter().zip(self.t).filter(|(_, &t)| t <= x).map(|(y, _)| *y).fold(self.at(x), f64::min)
    }
}

fn check_time_grid(t: &[f64], tau: f64) -> Result<()> {
    if t.len() < 2 || t[0] != 0.0 {
        return Err(MfclError::Domain("trace times must start at 0 with at least two samples".into()));
    }
    if t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(MfclError::Domain("trace times must increase".into()));
    }
    if !(0.0..=t[t.len() - 1] * (1.0 + 1e-12)).contains(&tau) {
        return Err(MfclError::Domain(format!("τ = {tau} outside the traced interval")));
    }
    Ok(())
}

/// `e^{C ∫_0^τ ‖ū‖_*}`.
fn transport_factor(inputs: &GronwallInputs<'_>, tau: f64) -> Result<f64> {
    let u = Pl::new(&inputs.traces.tau, &inputs.traces.ubar_star, "ubar_star")?;
    Ok((inputs.constants.c_gron()? * u.integral(tau)).exp())
}

/// `(1 − e^{−cτ})/c` with the `c = 0` limit `τ`.
fn one_minus_exp_over(c: f64, tau: f64) -> f64 {
    if c == 0.0 {
        tau
    } else {
        -(-c * tau).exp_m1() / c
    }
}

fn require_kappa(inputs: &GronwallInputs<'_>) -> Result<f64> {
    let k = inputs.kappa.ok_or_else(|| MfclError::Domain("κ is required for this bound".into()))?;
    if !(k >= 0.0 && k.is_finite()) {
        return Err(MfclError::Domain(format!("κ = {k}")));
    }
    Ok(k)
}

/// Relative-entropy bound:
/// `e^{A(τ)} h₀ + (C_*/N) ∫_0^τ e^{A(τ)−A(τ')} H(τ') dτ'`, `A = ∫ (H − e^{−2L})`.
fn main_re(inputs: &GronwallInputs<'_>, tau: f64) -> Result<f64> {
    let spec = inputs.spec;
    if !spec.is_antisymmetric() || !spec.is_log() {
        return Err(MfclError::Domain("relative-entropy bound needs antisymmetric drift and s = 0".into()));
    }
    let c_star = inputs.constants.c_star()?;
    let t = &inputs.traces.tau;
    let hess = Pl::new(t, &inputs.traces.hessian, "hessian")?;
    let lsup = Pl::new(t, &inputs.traces.log_sup, "log_sup")?;
    // A on [a, x] inside segment k, in closed form.
    let a_local = |k: usize, x: f64| -> f64 {
        let a = t[k];
        let dx = x - a;
        let (h0, h1) = (hess.y[k], hess.y[k + 1]);
        let (l0, l1) = (lsup.y[k], lsup.y[k + 1]);
        let len = t[k + 1] - a;
        let ih = h0 * dx + (h1 - h0) * dx * dx / (2.0 * len);
        let slope = (l1 - l0) / len;
        let ie = if (slope * dx).abs() < 1e-12 {
            (-2.0 * l0).exp() * dx * (1.0 - slope * dx)
        } else {
            (-2.0 * l0).exp() * -(-2.0 * slope * dx).exp_m1() / (2.0 * slope)
        };
        ih - ie
    };
    let (nodes, weights) = gauss_legendre(16, 0.0, 1.0);
    let mut a_acc = 0.0;
    let mut source = 0.0;
    for k in 0..t.len() - 1 {
        let a = t[k];
        if a >= tau {
            break;
        }
        let e = t[k + 1].min(tau);
        let a_end = a_local(k, e);
        // ∫_a^e e^{A(e) − A(x)} H(x) dx, then carried to τ by the later growth.
        let mut seg = 0.0;
        for (u, w) in nodes.iter().zip(&weights) {
            let x = a + u * (e - a);
            seg += w * (a_end - a_local(k, x)).exp() * hess.at_in(k, x);
        }
        seg *= e - a;
        source = source * a_end.exp() + seg;
        a_acc += a_end;
    }
    Ok(a_acc.exp() * inputs.initial + c_star / inputs.n as f64 * source)
}

fn mfe11(inputs: &GronwallInputs<'_>, tau: f64) -> Result<f64> {
    let spec = inputs.spec;
    if !spec.is_antisymmetric() || spec.is_super_coulomb() {
        return Err(MfclError::Domain("bound needs antisymmetric drift and s < d − 2".into()));
    }
    let c = inputs.constants.c_gron()?;
    let (d, s, nf) = (spec.d as f64, spec.s, inputs.n as f64);
    let sup_m = Pl::new(&inputs.traces.tau, &inputs.traces.mu_sup, "mu_sup")?.sup(tau);
    let ex = exponents(spec);
    let grow = 1.0 - spec.tau_factor(tau);
    // (1 − e^{−sτ/2})/s with the s = 0 value τ/2.
    let ratio = 0.5 * one_minus_exp_over(s / 2.0, tau);
    let bracket = inputs.initial
        + c * grow * sup_m.powf(s / d) * nf.powf(-ex.alpha1)
        + c * ratio / spec.beta * sup_m.powf((s + 2.0) / d) * n_high(spec, nf, ex.alpha2);
    Ok(transport_factor(inputs, tau)? * bracket)
}

/// `N^{(s+2)/d−1} 1_{d−4 ≤ s < d−2} + N^{−α₂} 1_{s < d−4}`.
fn n_high(spec: &InteractionSpec, nf: f64, alpha2: f64) -> f64 {
    let (d, s) = (spec.d as f64, spec.s);
    if s >= d - 4.0 {
        nf.powf((s + 2.0) / d - 1.0)
    } else {
        nf.powf(-alpha2)
    }
}

/// `N^{s/d−1} 1_{s ≥ d−2} + N^{−α₁} 1_{s < d−2}`.
fn n_low(spec: &InteractionSpec, nf: f64) -> f64 {
    let (d, s) = (spec.d as f64, spec.s);
    if spec.is_super_coulomb() {
        nf.powf(s / d - 1.0)
    } else {
        nf.powf(-exponents(spec).alpha1)
    }
}

fn mfe12(inputs: &GronwallInputs<'_>, tau: f64) -> Result<f64> {
    let spec = inputs.spec;
    if !spec.is_gradient() {
        return Err(MfclError::Domain("bound needs gradient drift".into()));
    }
    let c = inputs.constants.c_gron()?;
    let (d, s, nf) = (spec.d as f64, spec.s, inputs.n as f64);
    let sup_m = Pl::new(&inputs.traces.tau, &inputs.traces.mu_sup, "mu_sup")?.sup(tau);
    let log = if spec.is_log() { 1.0 / (4.0 * nf) } else { 0.0 };
    let bracket = inputs.initial + log + c * (1.0 - spec.tau_factor(tau)) * sup_m.powf(s / d) * n_low(spec, nf);
    Ok(transport_factor(inputs, tau)? * bracket)
}

fn mfe21(inputs: &GronwallInputs<'_>, tau: f64) -> Result<f64> {
    let spec = inputs.spec;
    if !spec.is_antisymmetric() || !(spec.s > 0.0) || spec.is_super_coulomb() {
        return Err(MfclError::Domain("bound needs antisymmetric drift and 0 < s < d − 2".into()));
    }
    let kappa = require_kappa(inputs)?;
    let c = inputs.constants.c_gron()?;
    let c0 = inputs.constants.c0()?;
    let (d, s, nf) = (spec.d as f64, spec.s, inputs.n as f64);
    let sup_m = Pl::new(&inputs.traces.tau, &inputs.traces.mu_sup, "mu_sup")?.sup(tau);
    let ex = exponents(spec);
    let grow = -(-s * tau / 4.0).exp_m1();
    let bracket = inputs.initial
        + c0 * grow * sup_m.powf(s / d) * nf.powf(-ex.alpha1 / (1.0 + s))
        + c * grow / (spec.beta * s) * sup_m.powf((s + 2.0) / d) * n_high(spec, nf, ex.alpha2);
    Ok((-kappa * tau).exp() * transport_factor(inputs, tau)? * bracket)
}

fn mfe22(inputs: &GronwallInputs<'_>, tau: f64) -> Result<f64> {
    let spec = inputs.spec;
    if !spec.is_gradient() {
        return Err(MfclError::Domain("bound needs gradient drift".into()));
    }
    if spec.is_zero_temperature() {
        return Err(MfclError::ZeroTemperature("LSI Grönwall bound"));
    }
    let kappa = require_kappa(inputs)?;
    let c = inputs.constants.c_gron()?;
    let c_frak = inputs.constants.c_frak()?;
    let (d, s, nf) = (spec.d as f64, spec.s, inputs.n as f64);
    let m = Pl::new(&inputs.traces.tau, &inputs.traces.mu_sup, "mu_sup")?;
    let (sup_m, inf_m) = (m.sup(tau), m.inf(tau));
    let decay = (-kappa * tau).exp();
    // e^{−κτ}(e^{(κ−s/2)τ} − 1)/(κ − s/2).
    let delta = kappa - s / 2.0;
    let ratio = if (delta * tau).abs() < 1e-12 { tau * decay } else { decay * (delta * tau).exp_m1() / delta };
    let mut bracket = decay * inputs.initial;
    if spec.is_log() {
        let log_minus = (-(nf * inf_m).ln()).max(0.0);
        bracket += c * (1.0 - decay) / nf * (1.0 + log_minus);
    }
    // sup over the history of the almost-positivity defect: it is monotone in ‖μ̄‖_∞ except
    // for the |log| of the sub-Coulomb log case, so both extremes are checked.
    let defect = positivity_defect(spec, inputs.n, sup_m, c_frak)?.max(positivity_defect(spec, inputs.n, inf_m, c_frak)?);
    bracket += c * kappa * spec.beta * ratio * defect;
    bracket += c * s * ratio * n_low(spec, nf) * sup_m.powf(s / d);
    Ok(transport_factor(inputs, tau)? * bracket)
}

/// Bound in self-similar time `τ`.
pub fn gronwall_rhs(variant: GronwallVariant, inputs: &GronwallInputs<'_>, tau: f64) -> Result<f64> {
    check_time_grid(&inputs.traces.tau, tau)?;
    let tau = tau.min(*inputs.traces.tau.last().unwrap_or(&0.0));
    if inputs.n == 0 {
        return Err(MfclError::Domain("N = 0".into()));
    }
    let v = match variant {
        GronwallVariant::MainRe => main_re(inputs, tau)?,
        GronwallVariant::Mfe11 => mfe11(inputs, tau)?,
        GronwallVariant::Mfe12 => mfe12(inputs, tau)?,
        GronwallVariant::Mfe21 => mfe21(inputs, tau)?,
        GronwallVariant::Mfe22 => mfe22(inputs, tau)?,
    };
    if !v.is_finite() {
        return Err(MfclError::NonFinite("Grönwall bound".into()));
    }
    Ok(v)
}

/// Bound in original time `t`, i.e. at `τ = log(t + 1)`; `initial` is the original-variable value.
pub fn gronwall_rhs_original(variant: GronwallVariant, inputs: &GronwallInputs<'_>, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(MfclError::Domain(format!("t = {t}")));
    }
    gronwall_rhs(variant, inputs, t.ln_1p())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consts() -> ConstantsConfig {
        ConstantsConfig {
            c_star: Some(1.3),
            c_frak: Some(0.7),
            c0: Some(1.1),
            c_gron: Some(0.4),
            c_ls: Some(2.0),
            ..Default::default()
        }
    }

    fn vortex_log() -> InteractionSpec {
        InteractionSpec::antisymmetric(2, 0.0, InteractionSpec::rotation_generator(2), 1.0).unwrap()
    }

    #[test]
    fn zero_traces_give_pure_decay() {
        let spec = vortex_log();
        let tr = Traces {
            tau: vec![0.0, 1.0, 2.0, 3.0],
            hessian: vec![0.0; 4],
            log_sup: vec![0.0; 4],
            ..Default::default()
        };
        let c = consts();
        let inp = GronwallInputs { spec: &spec, n: 10, initial: 0.8, traces: &tr, constants: &c, kappa: None };
        for t in [0.0, 0.5, 1.0, 7.0, 19.0] {
            let b = gronwall_rhs_original(GronwallVariant::MainRe, &inp, t).unwrap();
            assert!((b - 0.8 / (t + 1.0)).abs() < 1e-14, "t={t}");
        }
    }

    #[test]
    fn main_re_matches_ode_integration() {
        let spec = vortex_log();
        let tr = Traces {
            tau: vec![0.0, 0.4, 1.1, 1.5, 2.6, 3.0],
            hessian: vec![0.3, 0.9, 0.2, 1.4, 0.6, 0.1],
            log_sup: vec![0.1, 0.5, 0.05, 0.8, 0.3, 0.2],
            ..Default::default()
        };
        let c = consts();
        let n = 7;
        let inp = GronwallInputs { spec: &spec, n, initial: 0.35, traces: &tr, constants: &c, kappa: None };
        let hess = Pl::new(&tr.tau, &tr.hessian, "h").unwrap();
        let lsup = Pl::new(&tr.tau, &tr.log_sup, "l").unwrap();
        // dY/dτ = (H − e^{−2L}) Y + C_* H / N by RK4 with breakpoints at the samples.
        let f = |x: f64, y: f64| {
            let h = hess.at(x);
            (h - (-2.0 * lsup.at(x)).exp()) * y + 1.3 * h / n as f64
        };
        let mut y = 0.35;
        for k in 0..tr.tau.len() - 1 {
            let (a, b) = (tr.tau[k], tr.tau[k + 1]);
            let steps = 4000;
            let dt = (b - a) / steps as f64;
            for j in 0..steps {
                // Stay inside the segment so the interpolant is linear.
                let x = a + j as f64 * dt;
                let xm = x + 0.5 * dt;
                let xe = if j + 1 == steps { b - 1e-15 } else { x + dt };
                let k1 = f(x, y);
                let k2 = f(xm, y + 0.5 * dt * k1);
                let k3 = f(xm, y + 0.5 * dt * k2);
                let k4 = f(xe, y + dt * k3);
                y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
        }
        let b = gronwall_rhs(GronwallVariant::MainRe, &inp, 3.0).unwrap();
        assert!(((b - y) / y).abs() < 1e-6, "{b} vs {y}");
    }

    #[test]
    fn mfe12_log_gas_shape() {
        let spec = InteractionSpec::gradient(1, 0.0, 1.0).unwrap();
        let tr = Traces {
            tau: vec![0.0, 1.0, 2.0],
            ubar_star: vec![0.5, 0.25, 0.0],
            mu_sup: vec![1.0, 0.8, 0.7],
            ..Default::default()
        };
        let c = consts();
        let inp = GronwallInputs { spec: &spec, n: 20, initial: 0.1, traces: &tr, constants: &c, kappa: None };
        let b = gronwall_rhs(GronwallVariant::Mfe12, &inp, 2.0).unwrap();
        let expect = (0.4f64 * 0.5).exp() * (0.1 + 1.0 / 80.0);
        assert!((b - expect).abs() < 1e-14);
    }

    #[test]
    fn additive_terms_vanish_as_n_grows() {
        let spec = InteractionSpec::gradient(3, 0.5, 1.0).unwrap();
        let tr = Traces {
            tau: vec![0.0, 1.0, 2.0],
            ubar_star: vec![0.0; 3],
            mu_sup: vec![1.5, 1.2, 1.1],
            ..Default::default()
        };
        let c = consts();
        let mut prev = f64::INFINITY;
        for n in [10, 100, 1000, 10000, 100000] {
            let inp = GronwallInputs { spec: &spec, n, initial: 0.0, traces: &tr, constants: &c, kappa: Some(0.3) };
            let b = gronwall_rhs(GronwallVariant::Mfe22, &inp, 2.0).unwrap();
            assert!(b < prev && b > 0.0);
            prev = b;
        }
        assert!(prev < 1e-2);
    }

    #[test]
    fn kappa_equal_half_s_limit() {
        let spec = InteractionSpec::gradient(3, 0.5, 1.0).unwrap();
        let tr = Traces { tau: vec![0.0, 2.0], ubar_star: vec![0.0; 2], mu_sup: vec![1.0; 2], ..Default::default() };
        let c = consts();
        let at = |k: f64| {
            let inp = GronwallInputs { spec: &spec, n: 50, initial: 0.2, traces: &tr, constants: &c, kappa: Some(k) };
            gronwall_rhs(GronwallVariant::Mfe22, &inp, 1.5).unwrap()
        };
        assert!((at(0.25) - at(0.25 + 1e-9)).abs() < 1e-8);
    }

    #[test]
    fn wrong_drift_is_rejected() {
        let spec = InteractionSpec::gradient(1, 0.0, 1.0).unwrap();
        let tr = Traces { tau: vec![0.0, 1.0], hessian: vec![0.0; 2], log_sup: vec![0.0; 2], ..Default::default() };
        let c = consts();
        let inp = GronwallInputs { spec: &spec, n: 5, initial: 0.0, traces: &tr, constants: &c, kappa: None };
        assert!(gronwall_rhs(GronwallVariant::MainRe, &inp, 1.0).is_err());
        let unset = ConstantsConfig::default();
        let inp = GronwallInputs { constants: &unset, ..inp };
        let tr2 = Traces { tau: vec![0.0, 1.0], ubar_star: vec![0.0; 2], mu_sup: vec![1.0; 2], ..Default::default() };
        let inp = GronwallInputs { traces: &tr2, ..inp };
        assert_eq!(gronwall_rhs(GronwallVariant::Mfe12, &inp, 1.0), Err(MfclError::UnsetConstant("C_gron")));
    }
}
