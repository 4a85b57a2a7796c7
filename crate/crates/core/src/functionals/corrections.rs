//! Positivity corrections, exponents and the decay rate `κ`.

use serde::{Deserialize, Serialize};

use crate::error::{MfclError, Result};
use crate::functionals::records::ConstantsConfig;
use crate::kernels::InteractionSpec;

/// `α₁`, `α₂` and whether `α₂` is meaningful (`s < d − 2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha2_valid: bool,
}

/// `α₁ = 2(d−s)/(s(d+2)+2(d−s))`, `α₂ = 2(d−s−2)/((s+2)(d+2)+2(d−s−2))`.
pub fn exponents(spec: &InteractionSpec) -> Exponents {
    let d = spec.d as f64;
    let s = spec.s;
    let alpha1 = 2.0 * (d - s) / (s * (d + 2.0) + 2.0 * (d - s));
    let alpha2 = 2.0 * (d - s - 2.0) / ((s + 2.0) * (d + 2.0) + 2.0 * (d - s - 2.0));
    Exponents { alpha1, alpha2, alpha2_valid: s < d - 2.0 }
}

/// Exponent of `N` in the sub-Coulomb branch of `o_N(1)`:
/// `2(d−s)/((s(d+2)+2(d−s))(1+s))`.
pub fn o_n1_exponent(spec: &InteractionSpec) -> f64 {
    exponents(spec).alpha1 / (1.0 + spec.s)
}

/// Sup-norm information entering a correction: the current value and
/// `sup |log ‖·‖_∞|` over the history (self-similar normalization).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupNorm {
    pub current: f64,
    pub sup_abs_log: f64,
}

impl SupNorm {
    /// History reduced to the current value.
    pub fn constant(m: f64) -> Self {
        Self { current: m, sup_abs_log: m.ln().abs() }
    }

    /// From a trace of self-similar sup norms, reporting the last entry.
    pub fn from_trace(trace: &[f64]) -> Result<Self> {
        let last = *trace.last().ok_or_else(|| MfclError::Domain("empty sup-norm trace".into()))?;
        let sup = trace.iter().map(|m| m.ln().abs()).fold(0.0, f64::max);
        Ok(Self { current: last, sup_abs_log: sup })
    }
}

fn check_inputs(n: usize, m: f64) -> Result<()> {
    if n < 2 {
        return Err(MfclError::Domain(format!("N = {n} < 2")));
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(MfclError::Domain(format!("sup norm {m} must be positive")));
    }
    Ok(())
}

fn log_term(spec: &InteractionSpec, n: f64, m: f64) -> f64 {
    if spec.is_log() {
        (n * m).ln() / (2.0 * n * spec.d as f64)
    } else {
        0.0
    }
}

/// `ō_N^τ(1)` in self-similar variables, from `‖μ̄^τ‖_∞`.
pub fn correction_obar(
    spec: &InteractionSpec,
    tau: f64,
    n: usize,
    mu_bar: SupNorm,
    constants: &ConstantsConfig,
) -> Result<f64> {
    check_inputs(n, mu_bar.current)?;
    let c0 = constants.c0()?;
    let nf = n as f64;
    let (d, s) = (spec.d as f64, spec.s);
    let decay = spec.tau_factor(tau);
    let m_s = mu_bar.current.powf(s / d);
    let mut o = log_term(spec, nf, mu_bar.current);
    if spec.is_super_coulomb() {
        o += c0 * decay * m_s * nf.powf(s / d - 1.0);
    } else {
        if spec.is_log() {
            o += c0 * (nf.ln() + mu_bar.sup_abs_log) / nf;
        }
        o += c0 * decay * m_s * nf.powf(-o_n1_exponent(spec));
    }
    Ok(o)
}

/// `𝗈_N^t(1)` in original variables, from `‖μ^t‖_∞`; `sup_abs_log` is
/// `sup_t |log((t+1)^{d/2}‖μ^t‖_∞)|`.
pub fn correction_o_t(
    spec: &InteractionSpec,
    n: usize,
    mu: SupNorm,
    constants: &ConstantsConfig,
) -> Result<f64> {
    check_inputs(n, mu.current)?;
    let c0 = constants.c0()?;
    let nf = n as f64;
    let (d, s) = (spec.d as f64, spec.s);
    let m_s = mu.current.powf(s / d);
    let mut o = log_term(spec, nf, mu.current);
    if spec.is_super_coulomb() {
        o += c0 * m_s * nf.powf(s / d - 1.0);
    } else {
        if spec.is_log() {
            o += c0 * (nf.ln() + mu.sup_abs_log) / nf;
        }
        o += c0 * m_s * nf.powf(-o_n1_exponent(spec));
    }
    Ok(o)
}

/// `o_N(1)` of the modulated-energy commutator estimate, with `𝖢`.
pub fn correction_o_n1(
    spec: &InteractionSpec,
    n: usize,
    mu_inf: f64,
    constants: &ConstantsConfig,
) -> Result<f64> {
    check_inputs(n, mu_inf)?;
    let c = constants.c_frak()?;
    let nf = n as f64;
    let (d, s) = (spec.d as f64, spec.s);
    let m_s = mu_inf.powf(s / d);
    if spec.is_super_coulomb() {
        Ok(log_term(spec, nf, mu_inf) + c * m_s * nf.powf(s / d - 1.0))
    } else {
        let log = if spec.is_log() { c * (nf.ln() + mu_inf.ln().abs()) / nf } else { 0.0 };
        Ok(log + c * m_s * nf.powf(-o_n1_exponent(spec)))
    }
}

/// Almost-positivity defect `B(‖μ‖_∞)`, so that `F_N ≥ −B`.
pub fn positivity_defect(spec: &InteractionSpec, n: usize, mu_inf: f64, c_frak: f64) -> Result<f64> {
    check_inputs(n, mu_inf)?;
    let nf = n as f64;
    let (d, s) = (spec.d as f64, spec.s);
    let m_s = mu_inf.powf(s / d);
    if spec.is_super_coulomb() {
        Ok(log_term(spec, nf, mu_inf) + c_frak * m_s * nf.powf(s / d - 1.0))
    } else {
        let log = if spec.is_log() { c_frak * (nf.ln() + mu_inf.ln().abs()) / nf } else { 0.0 };
        Ok(log + c_frak * m_s * nf.powf(-exponents(spec).alpha1))
    }
}

/// Lower bound `−B(‖μ‖_∞)` on `F_N(X, μ)`.
pub fn positivity_lower_bound(
    spec: &InteractionSpec,
    n: usize,
    mu_inf: f64,
    constants: &ConstantsConfig,
) -> Result<f64> {
    Ok(-positivity_defect(spec, n, mu_inf, constants.c_frak()?)?)
}

/// Upper bound `β e^{−sτ/2} B(‖μ̄^τ‖_∞)` on `log K_{N,β}^τ / N`.
pub fn log_partition_bound(
    spec: &InteractionSpec,
    tau: f64,
    n: usize,
    mu_inf: f64,
    beta: f64,
    constants: &ConstantsConfig,
) -> Result<f64> {
    Ok(beta * spec.tau_factor(tau) * positivity_defect(spec, n, mu_inf, constants.c_frak()?)?)
}

/// Inputs for [`kappa`].
#[derive(Debug, Clone, PartialEq)]
pub enum KappaMode<'a> {
    /// Trace of `‖log(μ̄^τ/μ̄_β^∞)‖_∞`.
    Antisymmetric { log_sup_trace: &'a [f64] },
    /// `1/(C_LS β)`; `C_LS` comes from the constants.
    Gradient { constants: &'a ConstantsConfig },
}

/// Decay rate `κ`.
pub fn kappa(spec: &InteractionSpec, mode: KappaMode<'_>) -> Result<f64> {
    match mode {
        KappaMode::Antisymmetric { log_sup_trace } => {
            if log_sup_trace.is_empty() {
                return Err(MfclError::Domain("empty log sup-norm trace".into()));
            }
            let worst = log_sup_trace.iter().cloned().fold(0.0, f64::max);
            if !worst.is_finite() {
                return Err(MfclError::NonFinite("log sup-norm trace".into()));
            }
            Ok((-2.0 * worst).exp().min(spec.s / 4.0))
        }
        KappaMode::Gradient { constants } => {
            let c_ls = constants.c_ls()?;
            if spec.is_zero_temperature() {
                return Ok(0.0);
            }
            Ok(1.0 / (c_ls * spec.beta))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consts() -> ConstantsConfig {
        ConstantsConfig { c_star: Some(1.0), c_frak: Some(1.0), c0: Some(1.0), c_gron: Some(1.0), c_ls: Some(1.0), ..Default::default() }
    }

    #[test]
    fn exponent_examples() {
        let e = exponents(&InteractionSpec::gradient(2, 0.0, 1.0).unwrap());
        assert!((e.alpha1 - 1.0).abs() < 1e-15 && !e.alpha2_valid);
        let e = exponents(&InteractionSpec::gradient(3, 1.0, 1.0).unwrap());
        assert!((e.alpha1 - 4.0 / 9.0).abs() < 1e-15);
        let e = exponents(&InteractionSpec::gradient(5, 0.0, 1.0).unwrap());
        assert!((e.alpha2 - 0.3).abs() < 1e-15 && e.alpha2_valid);
        // Sub-Coulomb positivity exponent 2(d−s)/(2(d−s)+s(d+2)) at d=5, s=1.
        let e = exponents(&InteractionSpec::gradient(5, 1.0, 1.0).unwrap());
        assert!((e.alpha1 - 8.0 / 15.0).abs() < 1e-15);
        assert!((o_n1_exponent(&InteractionSpec::gradient(5, 1.0, 1.0).unwrap()) - 8.0 / 30.0).abs() < 1e-15);
    }

    #[test]
    fn positivity_example() {
        let spec = InteractionSpec::gradient(2, 0.0, 1.0).unwrap();
        let b = positivity_lower_bound(&spec, 100, 1.0, &consts()).unwrap();
        let expect = -(100f64.ln() / 400.0 + 0.01);
        assert!((b - expect).abs() < 1e-15);
        assert!((b + 0.021513).abs() < 1e-6);
    }

    #[test]
    fn obar_branches() {
        // d=2, s=0 is Coulomb, so the super-Coulomb branch applies.
        let spec = InteractionSpec::gradient(2, 0.0, 1.0).unwrap();
        let o = correction_obar(&spec, 0.0, 100, SupNorm::constant(1.0), &consts()).unwrap();
        assert!((o - (100f64.ln() / 400.0 + 0.01)).abs() < 1e-15);
        // Sub-Coulomb log: d=3, s=0.
        let spec = InteractionSpec::gradient(3, 0.0, 1.0).unwrap();
        let o = correction_obar(&spec, 0.0, 100, SupNorm::constant(1.0), &consts()).unwrap();
        let expect = 100f64.ln() / 600.0 + 100f64.ln() / 100.0 + 100f64.powf(-1.0);
        assert!((o - expect).abs() < 1e-15);
        // Second term scales by e^{−sτ/2}.
        let spec = InteractionSpec::gradient(3, 1.0, 1.0).unwrap();
        let a = correction_obar(&spec, 2.0, 50, SupNorm::constant(2.0), &consts()).unwrap();
        let b = correction_obar(&spec, 4.0, 50, SupNorm::constant(2.0), &consts()).unwrap();
        assert!((b / a - (-1f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn obar_matches_original_variables() {
        for (d, s) in [(1, 0.0), (2, 0.0), (3, 0.0), (3, 0.5), (2, 1.2)] {
            let spec = InteractionSpec::gradient(d, s, 1.0).unwrap();
            let tau = 1.7;
            let m_bar = 0.8;
            let m_t = (-(d as f64) * tau / 2.0).exp() * m_bar;
            let hist = 0.4;
            let ob = correction_obar(&spec, tau, 40, SupNorm { current: m_bar, sup_abs_log: hist }, &consts()).unwrap();
            let ot = correction_o_t(&spec, 40, SupNorm { current: m_t, sup_abs_log: hist }, &consts()).unwrap();
            let shift = if s == 0.0 { tau / (4.0 * 40.0) } else { 0.0 };
            assert!((ob - shift - ot).abs() < 1e-12, "d={d} s={s}");
        }
    }

    #[test]
    fn kappa_examples() {
        let spec = InteractionSpec::antisymmetric(3, 1.0, InteractionSpec::rotation_generator(3), 1.0).unwrap();
        assert_eq!(kappa(&spec, KappaMode::Antisymmetric { log_sup_trace: &[0.0, 0.0] }).unwrap(), 0.25);
        let big = InteractionSpec::antisymmetric(3, 2.9, InteractionSpec::rotation_generator(3), 1.0).unwrap();
        let k = kappa(&big, KappaMode::Antisymmetric { log_sup_trace: &[2f64.ln()] }).unwrap();
        assert!((k - 0.25).abs() < 1e-15);
        let grad = InteractionSpec::gradient(1, 0.0, 2.0).unwrap();
        assert_eq!(kappa(&grad, KappaMode::Gradient { constants: &consts() }).unwrap(), 0.5);
        let unset = ConstantsConfig::default();
        assert!(matches!(
            kappa(&grad, KappaMode::Gradient { constants: &unset }),
            Err(MfclError::UnsetConstant(_))
        ));
    }
}
