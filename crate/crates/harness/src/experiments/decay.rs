//! Particle ensembles against a mean-field background: the modulated-energy proxy
//! `E[F̄_N^τ] + ō_N^τ`, its exponential fit in `τ` and the Grönwall bound.

use mfcl_core::equilibrium::{gaussian_equilibrium, solve_thermal_equilibrium, EquilibriumOptions};
use mfcl_core::functionals::corrections::{correction_obar, SupNorm};
use mfcl_core::functionals::energy::{modulated_energy_with, BackgroundField};
use mfcl_core::functionals::{
    energy_distance_to_grid, gronwall_rhs, ConstantsConfig, GronwallInputs, GronwallVariant, Traces,
};
use mfcl_core::grid::GridDensity;
use mfcl_core::meanfield::{ubar_field, PdeOptions, PdeSolver, PdeState, TransportMode};
use mfcl_core::particles::{simulate_ensemble_full, EnsembleSpec, GridSampler, ParticleConfig};
use mfcl_core::transforms::{CoordinatePair, Coords};
use mfcl_core::{InteractionSpec, MfclError};

use crate::config::{spec_config, CalibrationParams, EnsembleParams, GridParams, InitLaw, PdeParams, RunConfig};
use crate::error::{HarnessError, Result, WithContext};
use crate::fit::fit_decay_rate;
use crate::output::{Check, Manifest, Sink};

use super::calibration::{family, frozen_constants};

/// Spacing of the trace grid feeding the Grönwall integrals.
const TRACE_STEP: f64 = 0.1;

fn loggas_spec() -> InteractionSpec {
    InteractionSpec::gradient(1, 0.0, 2.0).expect("valid spec")
}

fn loggas_base(name: &str, seed: u64, particles: Vec<usize>, replicas: usize) -> RunConfig {
    let mut c = RunConfig::new(name, seed);
    c.spec = Some(spec_config(&loggas_spec()));
    c.grid = Some(GridParams { n: 4096, extent: 24.0 });
    c.pde = Some(PdeParams {
        coords: Coords::SelfSimilar,
        dt: 0.005,
        horizon: 4.0,
        transport: TransportMode::Full,
        init: InitLaw::Bimodal { center: 15.0, var: 0.01 },
    });
    c.ensemble = Some(EnsembleParams {
        particles,
        replicas,
        dt: 0.0025,
        coords: Coords::SelfSimilar,
        force_cap: 30.0,
        min_dist: 1e-6,
    });
    c.checkpoints = vec![0.0, 2f64.ln(), 1.0, 2.0, 3.0, 4.0];
    c.calibration = Some(CalibrationParams::default());
    c
}

pub fn loggas_preset() -> RunConfig {
    loggas_base("decay-gradient-loggas", 2024, vec![256, 1024], 64)
}

pub fn audit_preset() -> RunConfig {
    loggas_base("gronwall-audit", 2025, vec![256], 32)
}

pub fn riesz_preset() -> RunConfig {
    let mut c = RunConfig::new("decay-antisym-riesz", 2026);
    let spec = InteractionSpec::antisymmetric(3, 0.5, InteractionSpec::rotation_generator(3), 1.0).expect("valid spec");
    c.spec = Some(spec_config(&spec));
    c.grid = Some(GridParams { n: 32, extent: 8.0 });
    c.pde = Some(PdeParams {
        coords: Coords::SelfSimilar,
        dt: 0.01,
        horizon: 4.0,
        transport: TransportMode::Radial,
        init: InitLaw::Gaussian { mean: vec![0.0; 3], var: 0.5 },
    });
    c.ensemble = Some(EnsembleParams {
        particles: vec![64, 128],
        replicas: 16,
        dt: 0.005,
        coords: Coords::SelfSimilar,
        force_cap: 30.0,
        min_dist: 1e-6,
    });
    c.checkpoints = vec![0.0, 1.0, 2.0, 3.0, 4.0];
    c.calibration = Some(CalibrationParams { train: 100, held_out: 100, margin: 2.0, n_min: 16, n_max: 128 });
    c
}

/// Mean-field densities at the particle checkpoints plus the traces on a finer grid.
///
/// `ū` needs overlapping supports of `μ̄` and `μ̄_β`; when they are disjoint at early times the
/// Grönwall traces start at `origin`, the first checkpoint where `ū` is defined, and are
/// stored relative to it.
struct Background {
    grid: Vec<f64>,
    mu_sup: Vec<f64>,
    densities: Vec<GridDensity>,
    origin: f64,
    traces: Traces,
    tail_warning: bool,
}

fn trace_grid(horizon: f64, checkpoints: &[f64]) -> Vec<f64> {
    let steps = (horizon / TRACE_STEP).round() as usize;
    let mut t: Vec<f64> = (0..=steps).map(|k| k as f64 * TRACE_STEP).filter(|t| *t <= horizon).collect();
    t.extend_from_slice(checkpoints);
    t.sort_by(f64::total_cmp);
    t.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    t
}

fn position(grid: &[f64], tau: f64) -> Result<usize> {
    grid.iter()
        .position(|t| (t - tau).abs() < 1e-9)
        .ok_or_else(|| HarnessError::Config(format!("checkpoint {tau} missing from the trace grid")))
}

fn assemble(states: &[PdeState], grid: &[f64], checkpoints: &[f64], eq: &GridDensity) -> Result<Background> {
    let mut star = Vec::with_capacity(states.len());
    let mut tail_warning = false;
    for s in states {
        match ubar_field(s, eq) {
            Ok(u) => {
                tail_warning |= u.tail_warning;
                star.push(Some(u.star_norm));
            }
            Err(MfclError::EmptyMask) if star.iter().all(Option::is_none) => star.push(None),
            Err(e) => return Err(HarnessError::from(e)).context(|| format!("ū at τ = {}", s.time)),
        }
    }
    let first = star.iter().position(Option::is_some).ok_or(MfclError::EmptyMask)?;
    let origin = *checkpoints
        .iter()
        .find(|&&c| grid.iter().position(|t| (t - c).abs() < 1e-9).is_some_and(|k| k >= first))
        .ok_or_else(|| HarnessError::Input("ū is undefined at every checkpoint".into()))?;
    let from = position(grid, origin)?;
    let traces = Traces {
        tau: grid[from..].iter().map(|t| t - origin).collect(),
        ubar_star: star[from..].iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
        mu_sup: states[from..].iter().map(|s| s.density.sup()).collect(),
        ..Default::default()
    };
    let densities = checkpoints
        .iter()
        .map(|&c| Ok(states[position(grid, c)?].density.clone()))
        .collect::<Result<_>>()?;
    Ok(Background {
        grid: grid.to_vec(),
        mu_sup: states.iter().map(|s| s.density.sup()).collect(),
        densities,
        origin,
        traces,
        tail_warning,
    })
}

fn pde_background(spec: &InteractionSpec, cfg: &RunConfig) -> Result<(Background, GridDensity)> {
    let p = cfg.pde()?;
    let geom = cfg.geometry()?;
    let grid = trace_grid(p.horizon, &cfg.checkpoints);
    let solver = PdeSolver::new(spec, p.coords, geom, PdeOptions { transport: p.transport, ..Default::default() })?;
    let init = p.init.density(geom)?;
    let states = solver.solve(&solver.state(0.0, init.clone(), p.dt)?, p.horizon, &grid)?;
    let eq = solve_thermal_equilibrium(spec, 0.0, geom, &EquilibriumOptions::default())?.density;
    Ok((assemble(&states, &grid, &cfg.checkpoints, &eq)?, init))
}

/// Centred Gaussian data under antisymmetric drift stay Gaussian with variance
/// `2/β + (v₀ − 2/β)e^{−τ}`.
fn gaussian_background(spec: &InteractionSpec, cfg: &RunConfig) -> Result<(Background, GridDensity)> {
    let p = cfg.pde()?;
    let geom = cfg.geometry()?;
    let v0 = match &p.init {
        InitLaw::Gaussian { mean, var } if mean.iter().all(|m| *m == 0.0) => *var,
        _ => return Err(HarnessError::Config("the Gaussian background needs a centred Gaussian start".into())),
    };
    if !spec.is_antisymmetric() {
        return Err(HarnessError::Config("the Gaussian background needs antisymmetric drift".into()));
    }
    let grid = trace_grid(p.horizon, &cfg.checkpoints);
    let eqv = 2.0 / spec.beta;
    let zero = vec![0.0; spec.d];
    let states = grid
        .iter()
        .map(|&tau| {
            let v = eqv + (v0 - eqv) * (-tau).exp();
            Ok(PdeState::new(spec.clone(), Coords::SelfSimilar, tau, GridDensity::gaussian(geom, &zero, v)?, p.dt)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let eq = gaussian_equilibrium(spec, geom)?;
    let init = states[0].density.clone();
    Ok((assemble(&states, &grid, &cfg.checkpoints, &eq)?, init))
}

struct Trajectory {
    n: usize,
    tau: Vec<f64>,
    energy: Vec<(f64, f64)>,
    obar: Vec<f64>,
    proxy: Vec<f64>,
    bound: Vec<f64>,
    energy_distance: Option<(f64, f64)>,
    cap_fraction: f64,
}

#[allow(clippy::too_many_arguments)]
fn trajectory(
    spec: &InteractionSpec,
    cfg: &RunConfig,
    ens: &EnsembleParams,
    n: usize,
    bg: &Background,
    init: &GridDensity,
    constants: &ConstantsConfig,
    variant: GronwallVariant,
    ed_at: Option<usize>,
    parallel: bool,
) -> Result<Trajectory> {
    let fields: Vec<BackgroundField> =
        bg.densities.iter().map(|mu| BackgroundField::new(mu, spec.s)).collect::<mfcl_core::Result<_>>()?;
    let observer = |k: usize, _: CoordinatePair, x: &ParticleConfig| -> mfcl_core::Result<Vec<(String, f64)>> {
        let mut out = vec![("energy".to_string(), modulated_energy_with(&fields[k], x)?)];
        if ed_at == Some(k) {
            out.push(("energy_distance".into(), energy_distance_to_grid(x, &bg.densities[k])?));
        }
        Ok(out)
    };
    let mut spec_ens = EnsembleSpec::new(n, ens.replicas, cfg.seed ^ (n as u64).rotate_left(32), ens.dt, ens.coords);
    spec_ens.force_cap = ens.force_cap;
    spec_ens.min_dist = ens.min_dist;
    let sampler = GridSampler::new(init.clone())?;
    let horizon = *cfg.checkpoints.last().ok_or_else(|| HarnessError::Config("no checkpoints".into()))?;
    let run =
        simulate_ensemble_full(spec, &spec_ens, &sampler, horizon, &cfg.checkpoints, &[&observer], false, parallel)?;

    let mut t = Trajectory {
        n,
        tau: Vec::new(),
        energy: Vec::new(),
        obar: Vec::new(),
        proxy: Vec::new(),
        bound: Vec::new(),
        energy_distance: None,
        cap_fraction: run.cap_fraction,
    };
    for (k, rec) in run.records.iter().enumerate() {
        let e = rec.get("energy").ok_or_else(|| HarnessError::Input("missing energy record".into()))?;
        let upto = position(&bg.grid, rec.tau)?;
        let sup = SupNorm::from_trace(&bg.mu_sup[..=upto])?;
        let o = correction_obar(spec, rec.tau, n, sup, constants)?;
        t.tau.push(rec.tau);
        t.energy.push((e.mean, e.stderr));
        t.obar.push(o);
        t.proxy.push(e.mean + o);
        if ed_at == Some(k) {
            let ed = rec.get("energy_distance").ok_or_else(|| HarnessError::Input("missing distance".into()))?;
            t.energy_distance = Some((ed.mean, ed.stderr));
        }
    }
    if bg.origin > 0.0 && spec.s != 0.0 {
        return Err(HarnessError::Input("a late Grönwall origin needs autonomous (s = 0) dynamics".into()));
    }
    let k0 = position(&t.tau, bg.origin)?;
    let initial = t.proxy[k0];
    for (k, &tau) in t.tau.iter().enumerate() {
        if k < k0 {
            t.bound.push(f64::NAN);
            continue;
        }
        let inputs = GronwallInputs { spec, n, initial, traces: &bg.traces, constants, kappa: None };
        t.bound.push(gronwall_rhs(variant, &inputs, tau - bg.origin)?);
    }
    Ok(t)
}

fn report(m: &mut Manifest, sink: &mut Sink, t: &Trajectory, fit_from: f64) -> Result<()> {
    let n = t.n;
    let rows: Vec<Vec<f64>> = (0..t.tau.len())
        .map(|k| vec![t.tau[k], t.energy[k].0, t.energy[k].1, t.obar[k], t.proxy[k], t.bound[k]])
        .collect();
    sink.table(&format!("proxy_N{n}.csv"), &["tau", "energy", "energy_stderr", "obar", "proxy", "bound"], &rows)?;
    m.result(format!("trajectory_N{n}"), &rows)?;
    m.result(format!("cap_fraction_N{n}"), t.cap_fraction)?;
    if t.cap_fraction > 0.01 {
        m.flags.push(format!("force cap active in {:.2}% of particle-steps at N = {n}", 100.0 * t.cap_fraction));
    }
    let min_proxy = t.proxy.iter().cloned().fold(f64::INFINITY, f64::min);
    m.check(Check::ge(format!("proxy_min_N{n}"), min_proxy, 0.0));
    let excess = t
        .proxy
        .iter()
        .zip(&t.bound)
        .filter(|(_, b)| !b.is_nan())
        .map(|(p, b)| p - b)
        .fold(f64::NEG_INFINITY, f64::max);
    m.check(Check::le(format!("proxy_minus_bound_max_N{n}"), excess, 0.0));

    let (tau, v): (Vec<f64>, Vec<f64>) =
        t.tau.iter().zip(&t.proxy).filter(|(tau, _)| **tau >= fit_from - 1e-12).map(|(a, b)| (*a, *b)).unzip();
    if tau.len() >= 4 {
        let fit = fit_decay_rate(&tau, &v).context(|| format!("decay fit at N = {n}"))?;
        m.check(Check::lt(format!("proxy_rate_plus_3se_N{n}"), fit.rate + 3.0 * fit.stderr, 0.0));
        m.fits.insert(format!("proxy_N{n}"), fit);
    }
    Ok(())
}

fn prepare(cfg: &RunConfig, m: &mut Manifest, parallel: bool) -> Result<(InteractionSpec, ConstantsConfig)> {
    let spec = cfg.interaction()?;
    let params = cfg.calibration();
    let grid = match spec.d {
        1 => GridParams { n: 512, extent: 12.0 },
        _ => cfg.grid.ok_or_else(|| HarnessError::Config("missing [grid]".into()))?,
    };
    let fam = family(&spec, grid, &params)?;
    let constants = frozen_constants(cfg, &fam, &params, m, parallel).context(|| "constants".to_string())?;
    Ok((spec, constants))
}

fn ed_index(cfg: &RunConfig) -> Result<usize> {
    let tau = CoordinatePair::from_t(1.0)?.tau;
    cfg.checkpoints
        .iter()
        .position(|c| (c - tau).abs() < 1e-12)
        .ok_or_else(|| HarnessError::Config("checkpoints must contain τ = log 2 (t = 1)".into()))
}

pub fn run_loggas(cfg: &RunConfig, m: &mut Manifest, sink: &mut Sink, parallel: bool) -> Result<()> {
    let (spec, constants) = prepare(cfg, m, parallel)?;
    let ens = cfg.ensemble()?.clone();
    let (bg, init) = pde_background(&spec, cfg)?;
    if bg.tail_warning {
        m.flags.push("ū does not decay towards the mask boundary".into());
    }
    m.result("gronwall_origin", bg.origin)?;
    let ed = ed_index(cfg)?;
    let mut distances = Vec::new();
    for &n in &ens.particles {
        let t = trajectory(&spec, cfg, &ens, n, &bg, &init, &constants, GronwallVariant::Mfe12, Some(ed), parallel)
            .context(|| format!("ensemble N = {n}"))?;
        report(m, sink, &t, 1.0)?;
        if let Some(d) = t.energy_distance {
            m.result(format!("energy_distance_N{n}"), [d.0, d.1])?;
            distances.push(d.0);
        }
    }
    if let [coarse, .., fine] = distances[..] {
        m.result("energy_distance_ratio", coarse / fine)?;
        m.check(Check::ge("energy_distance_ratio", coarse / fine, 1.5));
    }
    Ok(())
}

pub fn run_audit(cfg: &RunConfig, m: &mut Manifest, sink: &mut Sink, parallel: bool) -> Result<()> {
    let (spec, constants) = prepare(cfg, m, parallel)?;
    let ens = cfg.ensemble()?.clone();
    let (bg, init) = pde_background(&spec, cfg)?;
    m.result("gronwall_origin", bg.origin)?;
    m.result("traces", &bg.traces)?;
    for &n in &ens.particles {
        let t = trajectory(&spec, cfg, &ens, n, &bg, &init, &constants, GronwallVariant::Mfe12, None, parallel)
            .context(|| format!("ensemble N = {n}"))?;
        let slack: Vec<f64> = t.bound.iter().zip(&t.proxy).map(|(b, p)| b / p).collect();
        m.result(format!("bound_over_proxy_N{n}"), slack)?;
        report(m, sink, &t, 1.0)?;
    }
    Ok(())
}

pub fn run_riesz(cfg: &RunConfig, m: &mut Manifest, sink: &mut Sink, parallel: bool) -> Result<()> {
    let (spec, constants) = prepare(cfg, m, parallel)?;
    let ens = cfg.ensemble()?.clone();
    let (bg, init) = gaussian_background(&spec, cfg)?;
    if bg.tail_warning {
        m.flags.push("ū does not decay towards the mask boundary".into());
    }
    for &n in &ens.particles {
        let t = trajectory(&spec, cfg, &ens, n, &bg, &init, &constants, GronwallVariant::Mfe11, None, parallel)
            .context(|| format!("ensemble N = {n}"))?;
        report(m, sink, &t, 1.0)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_grid_contains_the_checkpoints() {
        let g = trace_grid(1.0, &[0.0, 2f64.ln(), 1.0]);
        assert_eq!(g.len(), 12);
        assert!(position(&g, 2f64.ln()).is_ok());
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn gaussian_background_tracks_the_ou_variance() {
        let mut cfg = riesz_preset();
        cfg.grid = Some(GridParams { n: 16, extent: 8.0 });
        cfg.checkpoints = vec![0.0, 1.0];
        cfg.pde.as_mut().unwrap().horizon = 1.0;
        let spec = cfg.interaction().unwrap();
        let (bg, init) = gaussian_background(&spec, &cfg).unwrap();
        assert_eq!(bg.densities.len(), 2);
        assert_eq!(bg.traces.tau.len(), 11);
        assert_eq!(bg.origin, 0.0);
        assert_eq!(init, bg.densities[0]);
        assert!(bg.traces.mu_sup.windows(2).all(|w| w[1] < w[0]));
    }
}
