use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mfcl::calibrate::calibrate_constants;
use mfcl::config::{GridParams, RunConfig};
use mfcl::error::{HarnessError, Result};
use mfcl::experiments::{run_experiment, CATALOG};
use mfcl::output::{density_csv, parse_density_csv, parse_particles_csv, write_file, Sink};
use mfcl_core::equilibrium::{
    equilibrium_residual, solve_thermal_equilibrium, solve_thermal_equilibrium_radial, EquilibriumOptions,
};
use mfcl_core::functionals::corrections::{correction_o_n1, correction_obar, SupNorm};
use mfcl_core::functionals::energy::{modulated_energy_with, BackgroundField};
use mfcl_core::functionals::energy_distance_to_grid;
use mfcl_core::grid::GridGeometry;
use mfcl_core::meanfield::{PdeOptions, PdeSolver};
use mfcl_core::particles::{simulate_ensemble_full, EnsembleSpec, GridSampler, ParticleConfig};
use mfcl_core::radial::RadialGrid;
use mfcl_core::transforms::CoordinatePair;
use mfcl_core::InteractionSpec;
use serde_json::json;

#[derive(Parser)]
#[command(name = "mfcl", version, about = "Mean-field laboratory for log/Riesz particle systems")]
struct Cli {
    /// Worker threads (also `MFCL_THREADS`); results do not depend on it.
    #[arg(long, global = true, env = "MFCL_THREADS")]
    threads: Option<usize>,
    /// Use the sequential code path.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML file merged over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key=value` override, applied after the file (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for records, fields and the manifest.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a catalog experiment.
    Experiment {
        name: String,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// List the experiment catalog.
    List,
    /// Print the resolved configuration of an experiment as TOML.
    Show {
        name: String,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Particle ensembles from an experiment's `[spec]`, `[ensemble]` and `[pde.init]`.
    Simulate {
        #[arg(long, default_value = "decay-gradient-loggas")]
        preset: String,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Mean-field PDE from an experiment's `[spec]`, `[grid]` and `[pde]`.
    Pde {
        #[arg(long, default_value = "decay-gradient-loggas")]
        preset: String,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Thermal equilibrium at self-similar time `τ`.
    Equilibrium {
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value_t = 0.0)]
        s: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 0.0)]
        tau: f64,
        #[arg(long, default_value_t = 512)]
        n: usize,
        #[arg(long, default_value_t = 12.0)]
        extent: f64,
        /// Radial reduction (gradient drift); `extent` is the outer radius.
        #[arg(long)]
        radial: bool,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One-shot functionals of a particle configuration against a density (CSV inputs).
    Functionals {
        #[arg(long)]
        particles: PathBuf,
        #[arg(long)]
        density: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        s: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 0.0)]
        tau: f64,
        /// TOML file with a `[constants]` table.
        #[arg(long)]
        constants: Option<PathBuf>,
    },
    /// Coordinate-change identities on randomized cases.
    TransformCheck {
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Calibrate `𝖢`, `C₀` and `C_gron` and write them as a `[constants]` TOML table.
    Calibrate {
        #[arg(long, default_value = "positivity-calibration")]
        preset: String,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn resolve(name: &str, a: &ConfigArgs) -> Result<RunConfig> {
    let mut c = RunConfig::resolve(name, a.config.as_deref(), &a.overrides)?;
    if let Some(s) = a.seed {
        c.seed = s;
    }
    c.output_dir = a.out.clone();
    Ok(c)
}

fn emit(out: Option<&PathBuf>, name: &str, body: &str) -> Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
            write_file(&dir.join(name), body)
        }
        None => {
            println!("{body}");
            Ok(())
        }
    }
}

fn read(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

fn experiment(name: &str, a: &ConfigArgs, parallel: bool) -> Result<i32> {
    let cfg = resolve(name, a)?;
    let m = run_experiment(&cfg, parallel)?;
    for c in &m.checks {
        eprintln!("{} {} = {:e} {} {:e}", if c.pass { "ok  " } else { "FAIL" }, c.name, c.value, c.relation, c.threshold);
    }
    for f in &m.flags {
        eprintln!("flag: {f}");
    }
    if cfg.output_dir.is_none() {
        println!("{}", m.to_json()?);
    }
    Ok(if m.passed() { 0 } else { 2 })
}

fn simulate(preset: &str, a: &ConfigArgs, parallel: bool) -> Result<i32> {
    let cfg = resolve(preset, a)?;
    let spec = cfg.interaction()?;
    let ens = cfg.ensemble()?;
    let p = cfg.pde()?;
    let sampler = GridSampler::new(p.init.density(cfg.geometry()?)?)?;
    let horizon = cfg.checkpoints.last().copied().unwrap_or(0.0);
    let observer = |_: usize, _: CoordinatePair, x: &ParticleConfig| -> mfcl_core::Result<Vec<(String, f64)>> {
        Ok(vec![("second_moment".into(), x.second_moment()), ("min_pair_distance".into(), x.min_pair_distance())])
    };
    let mut sink = Sink::new(cfg.output_dir.as_deref())?;
    let mut summary = Vec::new();
    for &n in &ens.particles {
        let mut e = EnsembleSpec::new(n, ens.replicas, cfg.seed, ens.dt, ens.coords);
        e.force_cap = ens.force_cap;
        e.min_dist = ens.min_dist;
        let run = simulate_ensemble_full(&spec, &e, &sampler, horizon, &cfg.checkpoints, &[&observer], false, parallel)?;
        sink.records(&format!("records_N{n}.jsonl"), &run.records)?;
        summary.push(json!({ "n": n, "cap_fraction": run.cap_fraction, "records": run.records }));
    }
    if cfg.output_dir.is_none() {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    }
    Ok(0)
}

fn pde(preset: &str, a: &ConfigArgs) -> Result<i32> {
    let cfg = resolve(preset, a)?;
    let spec = cfg.interaction()?;
    let p = cfg.pde()?;
    let geom = cfg.geometry()?;
    let solver = PdeSolver::new(&spec, p.coords, geom, PdeOptions { transport: p.transport, ..Default::default() })?;
    let cps = if cfg.checkpoints.is_empty() { vec![p.horizon] } else { cfg.checkpoints.clone() };
    let states = solver.solve(&solver.state(0.0, p.init.density(geom)?, p.dt)?, p.horizon, &cps)?;
    let mut sink = Sink::new(cfg.output_dir.as_deref())?;
    let mut rows = Vec::new();
    for (k, s) in states.iter().enumerate() {
        sink.density(&format!("density_{k:03}.csv"), &s.density)?;
        rows.push(json!({ "time": s.time, "mass": s.density.mass(), "sup": s.density.sup(), "mean": s.density.mean() }));
    }
    println!("{}", serde_json::to_string_pretty(&rows)?);
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn equilibrium(d: usize, s: f64, beta: f64, tau: f64, n: usize, extent: f64, radial: bool, tol: f64, out: Option<&PathBuf>) -> Result<i32> {
    let spec = InteractionSpec::gradient(d, s, beta)?;
    let opts = EquilibriumOptions { tol, ..Default::default() };
    if radial {
        let sol = solve_thermal_equilibrium_radial(&spec, tau, RadialGrid::new(d, n, extent)?, &opts)?;
        let body: String = std::iter::once("r,density\n".to_string())
            .chain(sol.density.grid.radii().iter().zip(&sol.density.values).map(|(r, v)| format!("{r:e},{v:e}\n")))
            .collect();
        eprintln!("residual {:e} after {} iterations", sol.residual, sol.iterations);
        emit(out, "equilibrium_radial.csv", &body)?;
    } else {
        let sol = solve_thermal_equilibrium(&spec, tau, GridGeometry::new(d, n, extent)?, &opts)?;
        let check = equilibrium_residual(&spec, tau, &sol.density)?;
        eprintln!("residual {:e} ({check:e} recomputed) after {} iterations", sol.residual, sol.iterations);
        emit(out, "equilibrium.csv", &density_csv(&sol.density))?;
    }
    Ok(0)
}

fn functionals(particles: &PathBuf, density: &PathBuf, s: f64, beta: f64, tau: f64, constants: Option<&PathBuf>) -> Result<i32> {
    let mu = parse_density_csv(&read(density)?)?;
    let x = parse_particles_csv(&read(particles)?)?;
    let spec = InteractionSpec::gradient(mu.d(), s, beta)?;
    let bg = BackgroundField::new(&mu, s)?;
    let energy = modulated_energy_with(&bg, &x)?;
    let mut report = json!({
        "n": x.n(),
        "modulated_energy": energy,
        "density_sup": mu.sup(),
        "grid": { "d": mu.geom.d, "n": mu.geom.n, "extent": mu.geom.extent },
    });
    if mu.d() == 1 {
        report["energy_distance"] = json!(energy_distance_to_grid(&x, &mu)?);
    }
    if let Some(path) = constants {
        let table: toml::Table = toml::from_str(&read(path)?)?;
        let c: mfcl_core::functionals::ConstantsConfig = table
            .get("constants")
            .cloned()
            .ok_or_else(|| HarnessError::Config(format!("{} has no [constants] table", path.display())))?
            .try_into()?;
        report["obar"] = json!(correction_obar(&spec, tau, x.n(), SupNorm::constant(mu.sup()), &c)?);
        report["o_n1"] = json!(correction_o_n1(&spec, x.n(), mu.sup(), &c)?);
        report["constants"] = serde_json::to_value(&c)?;
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(0)
}

fn calibrate(preset: &str, a: &ConfigArgs, parallel: bool) -> Result<i32> {
    let cfg = resolve(preset, a)?;
    let spec = cfg.interaction()?;
    let grid: GridParams = cfg.grid.ok_or_else(|| HarnessError::Config("missing [grid]".into()))?;
    let params = cfg.calibration();
    let fam = mfcl::calibrate::Family {
        spec: spec.clone(),
        geom: GridGeometry::new(spec.d, grid.n, grid.extent)?,
        n_min: params.n_min,
        n_max: params.n_max,
    };
    let (constants, pos, com) = calibrate_constants(&fam, cfg.seed, &params, parallel)?;
    for c in [&pos, &com] {
        eprintln!("{}: constant {:e}, {} of {} held-out violations", c.name, c.constant, c.violations, c.held_out);
    }
    let mut doc = toml::Table::new();
    doc.insert("constants".into(), toml::Value::try_from(&constants).map_err(|e| HarnessError::Config(e.to_string()))?);
    let body = toml::to_string_pretty(&doc).map_err(|e| HarnessError::Config(e.to_string()))?;
    emit(cfg.output_dir.as_ref(), "constants.toml", &body)?;
    Ok(if pos.violations + com.violations == 0 { 0 } else { 2 })
}

fn dispatch(cli: &Cli, parallel: bool) -> Result<i32> {
    match &cli.command {
        Command::Experiment { name, cfg } => experiment(name, cfg, parallel),
        Command::List => {
            CATALOG.iter().for_each(|n| println!("{n}"));
            Ok(0)
        }
        Command::Show { name, cfg } => {
            let c = resolve(name, cfg)?;
            println!("{}", toml::to_string_pretty(&c).map_err(|e| HarnessError::Config(e.to_string()))?);
            Ok(0)
        }
        Command::Simulate { preset, cfg } => simulate(preset, cfg, parallel),
        Command::Pde { preset, cfg } => pde(preset, cfg),
        Command::Equilibrium { d, s, beta, tau, n, extent, radial, tol, out } => {
            equilibrium(*d, *s, *beta, *tau, *n, *extent, *radial, *tol, out.as_ref())
        }
        Command::Functionals { particles, density, s, beta, tau, constants } => {
            functionals(particles, density, *s, *beta, *tau, constants.as_ref())
        }
        Command::TransformCheck { cases, seed } => {
            let a = ConfigArgs { config: None, overrides: vec![format!("cases={cases}")], seed: *seed, out: None };
            experiment("transform-suite", &a, parallel)
        }
        Command::Calibrate { preset, cfg } => calibrate(preset, cfg, parallel),
    }
}

#[cfg(feature = "parallel")]
fn with_threads(threads: Option<usize>, f: impl FnOnce() -> Result<i32> + Send) -> Result<i32> {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?
            .install(f),
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads(_threads: Option<usize>, f: impl FnOnce() -> Result<i32>) -> Result<i32> {
    f()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let parallel = cfg!(feature = "parallel") && !cli.sequential;
    match with_threads(cli.threads, || dispatch(&cli, parallel)) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
