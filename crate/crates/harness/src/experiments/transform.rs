//! Coordinate-change identities and the commutation of the change with the PDE flow.

use mfcl_core::functionals::entropy::GaussianProduct;
use mfcl_core::grid::{GridDensity, GridGeometry};
use mfcl_core::meanfield::{PdeOptions, PdeSolver};
use mfcl_core::par;
use mfcl_core::particles::{GridSampler, InitSampler};
use mfcl_core::transforms::{
    check_energy_scaling, check_entropy_invariance, pull_density, push_density_onto, CoordinatePair, Coords,
};
use mfcl_core::InteractionSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{spec_config, GridParams, InitLaw, PdeParams, RunConfig};
use crate::error::Result;
use crate::output::{Check, Manifest, Sink};

/// Accuracy the PDE runs below are resolved to (L¹, measured by grid refinement).
pub const SOLVER_TOLERANCE: f64 = 1e-4;

pub fn preset() -> RunConfig {
    let mut c = RunConfig::new("transform-suite", 20240601);
    c.cases = Some(100);
    c.spec = Some(spec_config(&InteractionSpec::gradient(1, 0.0, 1.0).expect("valid spec")));
    c.grid = Some(GridParams { n: 1024, extent: 12.0 });
    c.pde = Some(PdeParams {
        coords: Coords::SelfSimilar,
        dt: 0.005,
        horizon: 1.0,
        transport: mfcl_core::meanfield::TransportMode::Full,
        init: InitLaw::Gaussian { mean: vec![0.3], var: 1.0 },
    });
    c
}

fn rng(seed: u64, stream: u64, i: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
    r.set_stream(stream);
    r
}

fn entropy_case(seed: u64, i: usize) -> Result<f64> {
    let mut r = rng(seed, 11, i);
    let n = r.random_range(1..=6usize);
    let d = r.random_range(1..=3usize);
    let k = n * d;
    let mut draw = |lo: f64, hi: f64| -> Vec<f64> { (0..k).map(|_| r.random_range(lo..hi)).collect() };
    let f = GaussianProduct::new(draw(-2.0, 2.0), draw(0.2, 4.0))?;
    let g = GaussianProduct::new(draw(-2.0, 2.0), draw(0.2, 4.0))?;
    let tau = r.random_range(0.0..5.0);
    Ok(check_entropy_invariance(&f, &g, n, tau)?)
}

fn energy_case(seed: u64, i: usize) -> Result<(f64, usize, f64)> {
    let mut r = rng(seed, 12, i);
    let d = r.random_range(1..=3usize);
    let choices: Vec<f64> = [0.0, 0.5, 1.0].into_iter().filter(|s| *s < d as f64).collect();
    let s = choices[r.random_range(0..choices.len())];
    let spec = InteractionSpec::gradient(d, s, 1.0)?;
    let (n, extent) = match d {
        1 => (256, 8.0),
        2 => (48, 7.0),
        _ => (20, 6.0),
    };
    let geom = GridGeometry::new(d, n, extent)?;
    let mean: Vec<f64> = (0..d).map(|_| r.random_range(-0.5..0.5)).collect();
    let mu = GridDensity::gaussian(geom, &mean, r.random_range(0.5..1.5))?;
    let particles = r.random_range(2..=40usize);
    let mut crng = ChaCha8Rng::seed_from_u64(r.random());
    let x = GridSampler::new(mu.clone())?.sample(particles, &mut crng)?;
    let tau = r.random_range(0.0..2.0);
    Ok((check_energy_scaling(&spec, &x, &mu, tau)?, d, s))
}

/// Solves in original coordinates to `t = e − 1` and in self-similar ones to `τ = 1`, then
/// compares after pushing one way and pulling the other.
fn commutation(cfg: &RunConfig) -> Result<(f64, f64)> {
    let spec = cfg.interaction()?;
    let p = cfg.pde()?;
    let geom_ss = cfg.geometry()?;
    let geom_orig = GridGeometry::new(spec.d, geom_ss.n, geom_ss.extent * 4.0 / 3.0)?;
    let tau = p.horizon;
    let pair = CoordinatePair::from_tau(tau)?;
    let opts = PdeOptions { transport: p.transport, ..Default::default() };
    let orig = PdeSolver::new(&spec, Coords::Original, geom_orig, opts)?;
    let ss = PdeSolver::new(&spec, Coords::SelfSimilar, geom_ss, opts)?;
    let mu_t = orig.solve(&orig.state(0.0, p.init.density(geom_orig)?, p.dt)?, pair.t, &[pair.t])?.remove(0);
    let mu_tau = ss.solve(&ss.state(0.0, p.init.density(geom_ss)?, p.dt)?, tau, &[tau])?.remove(0);
    let pushed = push_density_onto(&mu_t.density, pair.t, geom_ss)?;
    let push_gap = pushed.l1_distance(&mu_tau.density)?;
    let pulled = pull_density(&mu_tau.density, pair.t)?;
    let orig_on_pulled = mu_t.density.resample(pulled.geom)?;
    let pull_gap = orig_on_pulled.l1_distance(&pulled)?;
    Ok((push_gap, pull_gap))
}

pub fn run(cfg: &RunConfig, m: &mut Manifest, sink: &mut Sink, parallel: bool) -> Result<()> {
    let cases = cfg.cases.unwrap_or(100);
    let entropy: Vec<f64> =
        par::map_range_with(parallel, cases, |i| entropy_case(cfg.seed, i)).into_iter().collect::<Result<_>>()?;
    let energy: Vec<(f64, usize, f64)> =
        par::map_range_with(parallel, cases, |i| energy_case(cfg.seed, i)).into_iter().collect::<Result<_>>()?;
    let max_entropy = entropy.iter().cloned().fold(0.0, f64::max);
    let max_energy = energy.iter().map(|e| e.0).fold(0.0, f64::max);
    m.result("entropy_invariance_max", max_entropy)?;
    m.result("energy_scaling_max", max_energy)?;
    m.result("cases", cases)?;
    sink.table(
        "energy_scaling.csv",
        &["case", "d", "s", "residual"],
        &energy.iter().enumerate().map(|(i, e)| vec![i as f64, e.1 as f64, e.2, e.0]).collect::<Vec<_>>(),
    )?;
    m.check(Check::le("entropy_invariance_max", max_entropy, 1e-10));
    m.check(Check::le("energy_scaling_max", max_energy, 1e-8));

    let (push_gap, pull_gap) = commutation(cfg)?;
    m.result("solver_tolerance", SOLVER_TOLERANCE)?;
    m.result("commutation_push_l1", push_gap)?;
    m.result("commutation_pull_l1", pull_gap)?;
    m.check(Check::le("commutation_push_l1", push_gap, 10.0 * SOLVER_TOLERANCE));
    m.check(Check::le("commutation_pull_l1", pull_gap, 10.0 * SOLVER_TOLERANCE));
    Ok(())
}
