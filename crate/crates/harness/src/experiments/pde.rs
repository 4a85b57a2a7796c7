//! Grid experiments: thermal equilibria, the radial vortex against the heat kernel, and the
//! Ornstein–Uhlenbeck (Mehler) relaxation with the `L^p` monotonicity suite.

use mfcl_core::equilibrium::{
    equilibrium_residual, gaussian_equilibrium, gaussian_equilibrium_radial, solve_thermal_equilibrium,
    solve_thermal_equilibrium_radial, EquilibriumOptions,
};
use mfcl_core::grid::{GridDensity, GridGeometry};
use mfcl_core::meanfield::{log_ratio_fields, scaled_lp_norm, PdeOptions, PdeSolver, TransportMode};
use mfcl_core::radial::RadialGrid;
use mfcl_core::transforms::Coords;
use mfcl_core::InteractionSpec;

use crate::config::{spec_config, GridParams, InitLaw, PdeParams, RunConfig};
use crate::error::{Result, WithContext};
use crate::fit::fit_decay_rate;
use crate::output::{Check, Manifest, Sink};

fn rotation(d: usize, beta: f64) -> InteractionSpec {
    InteractionSpec::antisymmetric(d, 0.0, InteractionSpec::rotation_generator(d), beta).expect("valid spec")
}

pub fn equilibrium_preset() -> RunConfig {
    let mut c = RunConfig::new("equilibrium-suite", 7);
    c.spec = Some(spec_config(&InteractionSpec::gradient(3, 1.0, 0.1).expect("valid spec")));
    c.grid = Some(GridParams { n: 800, extent: 40.0 });
    c.checkpoints = vec![0.0, 1.0, 2.0, 4.0, 8.0];
    c
}

/// One-dimensional grid solves whose residuals are reported alongside the radial run.
fn line_cases() -> Vec<(InteractionSpec, GridGeometry)> {
    let g = |n, l| GridGeometry::new(1, n, l).expect("valid grid");
    vec![
        (InteractionSpec::gradient(1, 0.0, 1.0).expect("valid spec"), g(512, 14.0)),
        (InteractionSpec::gradient(1, 0.0, 2.0).expect("valid spec"), g(512, 12.0)),
        (InteractionSpec::gradient(1, 0.5, 2.0).expect("valid spec"), g(512, 12.0)),
    ]
}

pub fn run_equilibrium(cfg: &RunConfig, m: &mut Manifest, sink: &mut Sink, _parallel: bool) -> Result<()> {
    let opts = EquilibriumOptions::default();
    let mut worst_residual: f64 = 0.0;
    let mut monotone = true;
    let mut line = Vec::new();
    for (spec, geom) in line_cases() {
        let sol = solve_thermal_equilibrium(&spec, 0.0, geom, &opts)?;
        let independent = equilibrium_residual(&spec, 0.0, &sol.density)?;
        worst_residual = worst_residual.max(sol.residual).max(independent);
        monotone &= sol.history.windows(2).skip(5).all(|w| w[1] <= w[0]);
        line.push(serde_json::json!({
            "s": spec.s,
            "beta": spec.beta,
            "residual": independent,
            "iterations": sol.iterations,
        }));
    }

    let spec = cfg.interaction()?;
    let g = cfg.grid.ok_or_else(|| crate::error::HarnessError::Config("missing [grid]".into()))?;
    let grid = RadialGrid::new(spec.d, g.n, g.extent)?;
    let gauss = gaussian_equilibrium_radial(&spec, grid)?;
    let mut rows = Vec::new();
    let mut far = f64::NAN;
    for &tau in &cfg.checkpoints {
        let sol = solve_thermal_equilibrium_radial(&spec, tau, grid, &opts).context(|| format!("radial τ = {tau}"))?;
        let dist = sol.density.l1_distance(&gauss)?;
        worst_residual = worst_residual.max(sol.residual);
        monotone &= sol.history.windows(2).skip(5).all(|w| w[1] <= w[0]);
        rows.push(vec![tau, sol.residual, dist, sol.iterations as f64]);
        far = dist;
    }
    sink.table("radial_equilibria.csv", &["tau", "residual", "l1_to_gaussian", "iterations"], &rows)?;
    m.result("line_solves", line)?;
    m.result("radial_l1_to_gaussian", rows.iter().map(|r| [r[0], r[2]]).collect::<Vec<_>>())?;
    m.result("max_residual", worst_residual)?;
    m.result("picard_monotone_after_5", monotone)?;
    m.check(Check::le("max_residual", worst_residual, 1e-8));
    m.check(Check::le("l1_to_gaussian_final", far, 1e-4));
    m.check(Check::ge("picard_monotone_after_5", monotone as u8 as f64, 1.0));
    Ok(())
}

pub fn vortex_preset() -> RunConfig {
    let mut c = RunConfig::new("radial-vortex", 11);
    c.spec = Some(spec_config(&rotation(2, 1.0)));
    c.grid = Some(GridParams { n: 256, extent: 10.0 });
    c.pde = Some(PdeParams {
        coords: Coords::Original,
        dt: 0.05,
        horizon: 1.0,
        transport: TransportMode::Full,
        init: InitLaw::Gaussian { mean: vec![0.0, 0.0], var: 1.0 },
    });
    c
}

fn heat_error(cfg: &RunConfig, n: usize) -> Result<f64> {
    let spec = cfg.interaction()?;
    let p = cfg.pde()?;
    let base = cfg.geometry()?;
    let geom = GridGeometry::new(spec.d, n, base.extent)?;
    let solver = PdeSolver::new(&spec, p.coords, geom, PdeOptions { transport: p.transport, ..Default::default() })?;
    let init = p.init.density(geom)?;
    let var0 = match &p.init {
        InitLaw::Gaussian { var, .. } => *var,
        _ => return Err(crate::error::HarnessError::Config("radial-vortex needs a centred Gaussian start".into())),
    };
    let end = solver.solve(&solver.state(0.0, init, p.dt)?, p.horizon, &[p.horizon])?.remove(0);
    let exact = GridDensity::gaussian(geom, &vec![0.0; spec.d], var0 + 2.0 * p.horizon / spec.beta)?;
    Ok(end.density.l1_distance(&exact)?)
}

pub fn run_vortex(cfg: &RunConfig, m: &mut Manifest, _sink: &mut Sink, _parallel: bool) -> Result<()> {
    let n = cfg.geometry()?.n;
    let coarse = heat_error(cfg, n)?;
    let fine = heat_error(cfg, 2 * n)?;
    m.result("l1_error_coarse", coarse)?;
    m.result("l1_error_fine", fine)?;
    m.result("refinement_ratio", coarse / fine)?;
    m.check(Check::le("l1_error_coarse", coarse, 1e-3));
    m.check(Check::ge("refinement_ratio", coarse / fine, 3.0));
    Ok(())
}

pub fn ou_preset() -> RunConfig {
    let mut c = RunConfig::new("ou-mehler", 13);
    c.spec = Some(spec_config(&rotation(2, 1.0)));
    c.grid = Some(GridParams { n: 128, extent: 10.0 });
    c.pde = Some(PdeParams {
        coords: Coords::SelfSimilar,
        dt: 0.01,
        horizon: 4.0,
        transport: TransportMode::Radial,
        init: InitLaw::Gaussian { mean: vec![0.1, 0.0], var: 1.0 },
    });
    c.checkpoints = (0..=16).map(|k| 0.25 * k as f64).collect();
    c
}

/// Self-similar one-dimensional runs of both drift types for the scaled `L^p` monotonicity.
fn monotonicity_cases() -> Vec<InteractionSpec> {
    vec![
        InteractionSpec::gradient(1, 0.0, 1.0).expect("valid spec"),
        InteractionSpec::gradient(1, 0.5, 2.0).expect("valid spec"),
        InteractionSpec::antisymmetric(1, 0.0, vec![0.0], 1.0).expect("valid spec"),
    ]
}

pub fn run_ou(cfg: &RunConfig, m: &mut Manifest, sink: &mut Sink, _parallel: bool) -> Result<()> {
    let spec = cfg.interaction()?;
    let p = cfg.pde()?;
    let geom = cfg.geometry()?;
    let solver = PdeSolver::new(&spec, p.coords, geom, PdeOptions { transport: p.transport, ..Default::default() })?;
    let eq = gaussian_equilibrium(&spec, geom)?;
    let states = solver.solve(&solver.state(0.0, p.init.density(geom)?, p.dt)?, p.horizon, &cfg.checkpoints)?;
    let mut rows = Vec::new();
    for s in &states {
        let mean = s.density.mean();
        let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
        let lr = log_ratio_fields(s, &eq)?;
        rows.push(vec![s.time, norm, lr.grad_w_sup]);
    }
    sink.table("ou_trajectory.csv", &["tau", "mean_norm", "grad_log_ratio_sup"], &rows)?;
    let window: Vec<&Vec<f64>> = rows.iter().filter(|r| r[0] >= 1.0 - 1e-12).collect();
    let tau: Vec<f64> = window.iter().map(|r| r[0]).collect();
    let mean_fit = fit_decay_rate(&tau, &window.iter().map(|r| r[1]).collect::<Vec<_>>())?;
    let grad_fit = fit_decay_rate(&tau, &window.iter().map(|r| r[2]).collect::<Vec<_>>())?;
    m.check(Check::near("mean_rate", mean_fit.rate, -0.5, 0.02));
    m.check(Check::near("grad_log_ratio_rate", grad_fit.rate, -1.0, 0.1));
    m.fits.insert("mean".into(), mean_fit);
    m.fits.insert("grad_log_ratio_sup".into(), grad_fit);

    let line = GridGeometry::new(1, 256, 12.0)?;
    let cps: Vec<f64> = (0..=20).map(|k| 0.1 * k as f64).collect();
    let mut violations = 0usize;
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    for case in monotonicity_cases() {
        let solver = PdeSolver::new(&case, Coords::SelfSimilar, line, PdeOptions::default())?;
        let init = GridDensity::gaussian(line, &[0.5], 0.3)?;
        let out = solver.solve(&solver.state(0.0, init, 0.01)?, 2.0, &cps)?;
        for q in [2.0, f64::INFINITY] {
            let series: Vec<f64> = out.iter().map(|s| scaled_lp_norm(s, q)).collect::<mfcl_core::Result<_>>()?;
            for w in series.windows(2) {
                checked += 1;
                let growth = w[1] / w[0] - 1.0;
                worst = worst.max(growth);
                if growth > 1e-12 {
                    violations += 1;
                }
            }
        }
    }
    m.result("lp_monotonicity_steps", checked)?;
    m.result("lp_monotonicity_worst_growth", worst)?;
    m.result("lp_monotonicity_violations", violations)?;
    m.check(Check::le("lp_monotonicity_violations", violations as f64, 0.0));
    Ok(())
}
