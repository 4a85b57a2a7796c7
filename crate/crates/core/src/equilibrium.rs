//! Thermal equilibrium `μ̄_β^τ` of the confined free energy and its Gaussian limit.
//!
//! The minimizer is characterized by
//! `(1/β) log μ̄ + |ξ|²/4 + g_τ * μ̄ = Z`. It is computed by damped Picard
//! iteration with geometric (log-space) mixing.

use serde::{Deserialize, Serialize};

use crate::conv::{Convolver, KernelSet};
use crate::error::{MfclError, Result};
use crate::grid::{GridDensity, GridGeometry};
use crate::kernels::InteractionSpec;
use crate::quad::kahan_sum;
use crate::radial::{coulomb_potential, RadialDensity, RadialGrid};

/// Cells with density at or below this value are ignored by the residual.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

/// Smallest damping the backtracking may reach before giving up.
const MIN_THETA: f64 = 1e-6;

/// Picard iteration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumOptions {
    pub tol: f64,
    pub theta: f64,
    pub max_iter: usize,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self { tol: 1e-8, theta: 0.5, max_iter: 10_000 }
    }
}

impl EquilibriumOptions {
    fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(MfclError::Domain(format!("damping θ = {} outside (0, 1]", self.theta)));
        }
        if !(self.tol > 0.0) {
            return Err(MfclError::Domain(format!("tolerance {}", self.tol)));
        }
        Ok(())
    }
}

/// Output of the equilibrium solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    pub density: GridDensity,
    pub residual: f64,
    pub iterations: usize,
    /// Residual after every accepted iterate, starting with the initial guess.
    pub history: Vec<f64>,
}

/// Radial counterpart of [`EquilibriumSolution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialEquilibriumSolution {
    pub density: RadialDensity,
    pub residual: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
}

/// Terms of `Ē_β^τ(μ) = ½∬ g_τ μμ + ∫ |ξ|²/4 μ + (1/β) ∫ μ log μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyParts {
    pub interaction: f64,
    pub confinement: f64,
    pub entropy: f64,
    pub total: f64,
}

fn finite_beta(spec: &InteractionSpec, what: &'static str) -> Result<f64> {
    if spec.is_zero_temperature() {
        return Err(MfclError::ZeroTemperature(what));
    }
    Ok(spec.beta)
}

fn check_tau(tau: f64) -> Result<()> {
    if tau.is_nan() || tau < 0.0 {
        return Err(MfclError::Domain(format!("tau = {tau}")));
    }
    Ok(())
}

fn check_geometry(spec: &InteractionSpec, geom: &GridGeometry) -> Result<()> {
    if geom.d != spec.d {
        return Err(MfclError::Domain(format!("grid dimension {} but d = {}", geom.d, spec.d)));
    }
    Ok(())
}

/// `μ̄_β^∞ = (4π/β)^{−d/2} e^{−β|ξ|²/4}` sampled and renormalized on the grid.
pub fn gaussian_equilibrium(spec: &InteractionSpec, geom: GridGeometry) -> Result<GridDensity> {
    let beta = finite_beta(spec, "the Gaussian equilibrium")?;
    check_geometry(spec, &geom)?;
    GridDensity::gaussian(geom, &vec![0.0; geom.d], 2.0 / beta)
}

/// Radial profile of `μ̄_β^∞`.
pub fn gaussian_equilibrium_radial(spec: &InteractionSpec, grid: RadialGrid) -> Result<RadialDensity> {
    let beta = finite_beta(spec, "the Gaussian equilibrium")?;
    if grid.d != spec.d {
        return Err(MfclError::Domain("radial grid dimension differs from spec".into()));
    }
    RadialDensity::gaussian(grid, 2.0 / beta)
}

/// A discretized equilibrium problem: node weights, confinement `|ξ|²/4`
/// and the map `μ ↦ g * μ`.
struct Problem<'a> {
    weights: Vec<f64>,
    confinement: Vec<f64>,
    potential: Box<dyn Fn(&[f64]) -> Result<Vec<f64>> + 'a>,
    tau_factor: f64,
    beta: f64,
}

impl Problem<'_> {
    fn total_potential(&self, mu: &[f64]) -> Result<Vec<f64>> {
        if self.tau_factor == 0.0 {
            return Ok(self.confinement.clone());
        }
        let p = (self.potential)(mu)?;
        Ok(self.confinement.iter().zip(&p).map(|(c, p)| c + self.tau_factor * p).collect())
    }

    /// Residual of the relation for `μ = exp(ℓ)` given its total potential.
    fn residual(&self, log_mu: &[f64], v: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        let lhs: Vec<f64> = log_mu.iter().zip(v).map(|(l, v)| l / self.beta + v).collect();
        for ((l, w), e) in log_mu.iter().zip(&self.weights).zip(&lhs) {
            let m = l.exp() * w;
            num += m * e;
            den += m;
        }
        let z = num / den;
        log_mu
            .iter()
            .zip(&lhs)
            .filter(|(l, _)| l.exp() > RESIDUAL_FLOOR)
            .map(|(_, e)| (e - z).abs())
            .fold(0.0, f64::max)
    }

    /// Shifts `ℓ` so that `Σ w e^ℓ = 1`.
    fn normalize_log(&self, log_mu: &mut [f64]) {
        let mx = log_mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s = kahan_sum(log_mu.iter().zip(&self.weights).map(|(l, w)| w * (l - mx).exp()));
        let shift = mx + s.ln();
        log_mu.iter_mut().for_each(|l| *l -= shift);
    }

    fn solve(&self, init: &[f64], opts: &EquilibriumOptions) -> Result<(Vec<f64>, f64, usize, Vec<f64>)> {
        opts.validate()?;
        if let Some(v) = init.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(MfclError::Domain(format!("initial density must be positive, found {v}")));
        }
        let mut log_mu: Vec<f64> = init.iter().map(|v| v.ln()).collect();
        self.normalize_log(&mut log_mu);
        let mut v = self.total_potential(&exp_all(&log_mu))?;
        let mut res = self.residual(&log_mu, &v);
        let mut history = vec![res];
        let mut theta = opts.theta;
        let mut iterations = 0;
        while res > opts.tol {
            if iterations >= opts.max_iter {
                return Err(MfclError::NonConvergence { iterations, residual: res });
            }
            iterations += 1;
            let mut cand: Vec<f64> = log_mu
                .iter()
                .zip(&v)
                .map(|(l, v)| (1.0 - theta) * l - theta * self.beta * v)
                .collect();
            self.normalize_log(&mut cand);
            let cv = self.total_potential(&exp_all(&cand))?;
            let cres = self.residual(&cand, &cv);
            if !cres.is_finite() {
                return Err(MfclError::NonFinite("equilibrium iterate".into()));
            }
            if cres <= res {
                log_mu = cand;
                v = cv;
                res = cres;
                history.push(res);
                theta = (1.5 * theta).min(opts.theta);
            } else {
                theta *= 0.5;
                if theta < MIN_THETA {
                    return Err(MfclError::NonConvergence { iterations, residual: res });
                }
            }
        }
        Ok((exp_all(&log_mu), res, iterations, history))
    }
}

fn exp_all(l: &[f64]) -> Vec<f64> {
    l.iter().map(|v| v.exp()).collect()
}

fn grid_problem<'a>(spec: &InteractionSpec, tau: f64, geom: GridGeometry) -> Result<Problem<'a>> {
    check_tau(tau)?;
    check_geometry(spec, &geom)?;
    let beta = finite_beta(spec, "the thermal equilibrium")?;
    let conv = Convolver::new(geom, spec.s, KernelSet::POTENTIAL);
    let vol = geom.cell_volume();
    let mut x = vec![0.0; geom.d];
    let confinement = (0..geom.len())
        .map(|k| {
            geom.point(k, &mut x);
            x.iter().map(|v| v * v).sum::<f64>() / 4.0
        })
        .collect();
    Ok(Problem {
        weights: vec![vol; geom.len()],
        confinement,
        potential: Box::new(move |mu: &[f64]| Ok(conv.potential(mu))),
        tau_factor: spec.tau_factor(tau),
        beta,
    })
}

fn radial_problem<'a>(spec: &InteractionSpec, tau: f64, grid: RadialGrid) -> Result<Problem<'a>> {
    check_tau(tau)?;
    let beta = finite_beta(spec, "the thermal equilibrium")?;
    if grid.d != spec.d {
        return Err(MfclError::Domain("radial grid dimension differs from spec".into()));
    }
    let s = spec.s;
    if s != spec.d as f64 - 2.0 {
        return Err(MfclError::Unsupported("radial equilibria need the Coulomb case s = d − 2".into()));
    }
    Ok(Problem {
        weights: grid.volumes(),
        confinement: grid.radii().iter().map(|r| r * r / 4.0).collect(),
        potential: Box::new(move |mu: &[f64]| {
            coulomb_potential(&RadialDensity { grid, values: mu.to_vec() }, s)
        }),
        tau_factor: spec.tau_factor(tau),
        beta,
    })
}

/// Solves for `μ̄_β^τ` starting from the Gaussian limit.
pub fn solve_thermal_equilibrium(
    spec: &InteractionSpec,
    tau: f64,
    geom: GridGeometry,
    opts: &EquilibriumOptions,
) -> Result<EquilibriumSolution> {
    let init = gaussian_equilibrium(spec, geom)?;
    if init.boundary_mass() >= 1e-12 {
        return Err(MfclError::Domain(format!(
            "grid extent {} too small: Gaussian boundary mass {:e}",
            geom.extent,
            init.boundary_mass()
        )));
    }
    solve_thermal_equilibrium_from(spec, tau, &init, opts)
}

/// Solves for `μ̄_β^τ` from a given positive initial density.
pub fn solve_thermal_equilibrium_from(
    spec: &InteractionSpec,
    tau: f64,
    init: &GridDensity,
    opts: &EquilibriumOptions,
) -> Result<EquilibriumSolution> {
    let problem = grid_problem(spec, tau, init.geom)?;
    let (values, residual, iterations, history) = problem.solve(&init.values, opts)?;
    let density = GridDensity::new(init.geom, values)?;
    let bm = density.boundary_mass();
    if bm >= 1e-10 {
        return Err(MfclError::Invariant(format!("equilibrium boundary mass {bm:e}")));
    }
    Ok(EquilibriumSolution { density, residual, iterations, history })
}

/// `sup |(1/β) log μ + |ξ|²/4 + g_τ*μ − Z|` over cells with `μ > 1e−12`.
pub fn equilibrium_residual(spec: &InteractionSpec, tau: f64, mu: &GridDensity) -> Result<f64> {
    let problem = grid_problem(spec, tau, mu.geom)?;
    let v = problem.total_potential(&mu.values)?;
    let log_mu: Vec<f64> = mu.values.iter().map(|m| if *m > 0.0 { m.ln() } else { f64::NEG_INFINITY }).collect();
    Ok(residual_masked(&problem, &log_mu, &v))
}

fn residual_masked(problem: &Problem, log_mu: &[f64], v: &[f64]) -> f64 {
    // Cells with μ = 0 carry no weight in Z and are outside the sup.
    let keep: Vec<usize> = (0..log_mu.len()).filter(|&i| log_mu[i].is_finite()).collect();
    let sub = |a: &[f64]| keep.iter().map(|&i| a[i]).collect::<Vec<_>>();
    let p = Problem {
        weights: sub(&problem.weights),
        confinement: Vec::new(),
        potential: Box::new(|_| Ok(Vec::new())),
        tau_factor: problem.tau_factor,
        beta: problem.beta,
    };
    p.residual(&sub(log_mu), &sub(v))
}

/// `Ē_β^τ(μ)` by FFT convolution and nodal quadrature; `0 log 0 = 0`.
pub fn macroscopic_free_energy(spec: &InteractionSpec, tau: f64, mu: &GridDensity) -> Result<FreeEnergyParts> {
    let problem = grid_problem(spec, tau, mu.geom)?;
    let vol = mu.geom.cell_volume();
    let interaction = if problem.tau_factor == 0.0 {
        0.0
    } else {
        let p = (problem.potential)(&mu.values)?;
        0.5 * problem.tau_factor * vol * kahan_sum(mu.values.iter().zip(&p).map(|(m, p)| m * p))
    };
    let confinement = vol * kahan_sum(mu.values.iter().zip(&problem.confinement).map(|(m, c)| m * c));
    let entropy = vol / problem.beta
        * kahan_sum(mu.values.iter().map(|&m| if m > 0.0 { m * m.ln() } else { 0.0 }));
    Ok(FreeEnergyParts { interaction, confinement, entropy, total: interaction + confinement + entropy })
}

/// Radial equilibrium for the Coulomb case `s = d − 2`, potentials by the shell theorem.
pub fn solve_thermal_equilibrium_radial(
    spec: &InteractionSpec,
    tau: f64,
    grid: RadialGrid,
    opts: &EquilibriumOptions,
) -> Result<RadialEquilibriumSolution> {
    let problem = radial_problem(spec, tau, grid)?;
    let init = gaussian_equilibrium_radial(spec, grid)?;
    if init.boundary_mass() >= 1e-12 {
        return Err(MfclError::Domain(format!("radius {} too small for the Gaussian envelope", grid.radius)));
    }
    let (values, residual, iterations, history) = problem.solve(&init.values, opts)?;
    let density = RadialDensity::new(grid, values)?;
    Ok(RadialEquilibriumSolution { density, residual, iterations, history })
}

/// Radial version of [`equilibrium_residual`].
pub fn equilibrium_residual_radial(spec: &InteractionSpec, tau: f64, mu: &RadialDensity) -> Result<f64> {
    let problem = radial_problem(spec, tau, mu.grid)?;
    let v = problem.total_potential(&mu.values)?;
    let log_mu: Vec<f64> = mu.values.iter().map(|m| if *m > 0.0 { m.ln() } else { f64::NEG_INFINITY }).collect();
    Ok(residual_masked(&problem, &log_mu, &v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::hat_weight_potential;
    use std::f64::consts::PI;

    fn opts() -> EquilibriumOptions {
        EquilibriumOptions::default()
    }

    #[test]
    fn gaussian_limit_examples() {
        let spec = InteractionSpec::gradient(1, 0.0, 4.0 * PI).unwrap();
        let geom = GridGeometry::new(1, 400, 4.0).unwrap();
        let g = gaussian_equilibrium(&spec, geom).unwrap();
        assert!((g.mass() - 1.0).abs() < 1e-8);
        // Unnormalized peak (4π/β)^{−1/2} = 1; grid renormalization is a tiny factor.
        assert!((g.values[200] - 1.0).abs() < 1e-10);
        let var = g.second_moment();
        assert!((var - 2.0 / spec.beta).abs() < 1e-10);
        let cold = InteractionSpec::gradient(1, 0.0, f64::INFINITY).unwrap();
        assert!(matches!(gaussian_equilibrium(&cold, geom), Err(MfclError::ZeroTemperature(_))));
    }

    #[test]
    fn infinite_tau_gives_the_gaussian() {
        let spec = InteractionSpec::gradient(1, 0.5, 1.0).unwrap();
        let geom = GridGeometry::new(1, 256, 14.0).unwrap();
        let sol = solve_thermal_equilibrium(&spec, f64::INFINITY, geom, &opts()).unwrap();
        let g = gaussian_equilibrium(&spec, geom).unwrap();
        assert!(sol.density.l1_distance(&g).unwrap() <= 1e-8);
        assert!(equilibrium_residual(&spec, f64::INFINITY, &g).unwrap() <= 1e-10);
    }

    #[test]
    fn log_gas_equilibrium_is_time_independent() {
        let spec = InteractionSpec::gradient(1, 0.0, 1.0).unwrap();
        let geom = GridGeometry::new(1, 256, 14.0).unwrap();
        let a = solve_thermal_equilibrium(&spec, 0.0, geom, &opts()).unwrap();
        let b = solve_thermal_equilibrium(&spec, 3.0, geom, &opts()).unwrap();
        assert!(a.residual <= 1e-8);
        assert!(a.density.l1_distance(&b.density).unwrap() <= 1e-8);
    }

    /// Damped Newton on the optimality system of the discrete free energy
    /// `½ Σ μ_i W_ij μ_j h + Σ μ_i ξ_i²/4 h + β^{-1} Σ μ_i log μ_i h` on `h Σ μ = 1`,
    /// with a dense kernel matrix assembled directly.
    fn newton_oracle(beta: f64, geom: GridGeometry) -> Vec<f64> {
        let n = geom.n;
        let h = geom.h();
        let w: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| hat_weight_potential(0.0, h, i as i64 - j as i64)).collect())
            .collect();
        let xs: Vec<f64> = (0..n).map(|i| geom.coord(i)).collect();
        let mut u: Vec<f64> = xs.iter().map(|x| -beta * x * x / 4.0).collect();
        let z: f64 = u.iter().map(|v| v.exp() * h).sum::<f64>().ln();
        u.iter_mut().for_each(|v| *v -= z);
        let mut lambda = 0.0;
        let system = |u: &[f64], lambda: f64| -> Vec<f64> {
            let mu: Vec<f64> = u.iter().map(|v| v.exp()).collect();
            let mut f: Vec<f64> = (0..n)
                .map(|i| {
                    let conv: f64 = (0..n).map(|j| w[i][j] * mu[j]).sum();
                    u[i] / beta + xs[i] * xs[i] / 4.0 + conv - lambda
                })
                .collect();
            f.push(mu.iter().sum::<f64>() * h - 1.0);
            f
        };
        let norm = |f: &[f64]| f.iter().map(|v| v * v).sum::<f64>().sqrt();
        for _ in 0..60 {
            let f = system(&u, lambda);
            if norm(&f) < 1e-14 {
                break;
            }
            let mu: Vec<f64> = u.iter().map(|v| v.exp()).collect();
            let m = n + 1;
            let mut a = vec![vec![0.0; m + 1]; m];
            for i in 0..n {
                for j in 0..n {
                    a[i][j] = w[i][j] * mu[j];
                }
                a[i][i] += 1.0 / beta;
                a[i][n] = -1.0;
                a[i][m] = -f[i];
            }
            for j in 0..n {
                a[n][j] = h * mu[j];
            }
            a[n][m] = -f[n];
            // Gaussian elimination with partial pivoting.
            for c in 0..m {
                let p = (c..m).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
                a.swap(c, p);
                for r in c + 1..m {
                    let fct = a[r][c] / a[c][c];
                    for k in c..=m {
                        a[r][k] -= fct * a[c][k];
                    }
                }
            }
            let mut dx = vec![0.0; m];
            for r in (0..m).rev() {
                let s: f64 = (r + 1..m).map(|k| a[r][k] * dx[k]).sum();
                dx[r] = (a[r][m] - s) / a[r][r];
            }
            let f0 = norm(&f);
            let mut step = 1.0;
            loop {
                let un: Vec<f64> = (0..n).map(|i| u[i] + step * dx[i]).collect();
                let ln = lambda + step * dx[n];
                if norm(&system(&un, ln)) < f0 || step < 1e-4 {
                    u = un;
                    lambda = ln;
                    break;
                }
                step *= 0.5;
            }
        }
        u.iter().map(|v| v.exp()).collect()
    }

    #[test]
    fn matches_free_energy_minimization_oracle() {
        let spec = InteractionSpec::gradient(1, 0.0, 1.0).unwrap();
        let geom = GridGeometry::new(1, 128, 13.0).unwrap();
        let sol = solve_thermal_equilibrium(&spec, 0.0, geom, &opts()).unwrap();
        let oracle = newton_oracle(1.0, geom);
        let l1: f64 = sol.density.values.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).sum::<f64>() * geom.h();
        assert!(l1 <= 1e-6, "{l1}");
    }

    #[test]
    fn residual_detects_a_tilt() {
        let spec = InteractionSpec::gradient(1, 0.0, 1.0).unwrap();
        let geom = GridGeometry::new(1, 256, 14.0).unwrap();
        let sol = solve_thermal_equilibrium(&spec, 0.0, geom, &opts()).unwrap();
        assert!(equilibrium_residual(&spec, 0.0, &sol.density).unwrap() <= 1e-8);
        let mut tilted = sol.density.clone();
        for (k, v) in tilted.values.iter_mut().enumerate() {
            *v *= 1.0 + 0.1 * geom.coord(k) / geom.extent;
        }
        tilted.normalize().unwrap();
        assert!(equilibrium_residual(&spec, 0.0, &tilted).unwrap() > 1e-7);
    }

    #[test]
    fn equilibrium_minimizes_the_free_energy() {
        use rand::{Rng, SeedableRng};
        let spec = InteractionSpec::gradient(1, 0.0, 1.0).unwrap();
        let geom = GridGeometry::new(1, 256, 14.0).unwrap();
        let sol = solve_thermal_equilibrium(&spec, 0.0, geom, &opts()).unwrap();
        let e0 = macroscopic_free_energy(&spec, 0.0, &sol.density).unwrap().total;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let (a, b, c) = (rng.random_range(-0.2..0.2), rng.random_range(-0.5..0.5), rng.random_range(0.5..3.0));
            let mut p = sol.density.clone();
            for (k, v) in p.values.iter_mut().enumerate() {
                let x = geom.coord(k);
                *v *= 1.0 + a * (-(x - b).powi(2) / c).exp();
            }
            p.normalize().unwrap();
            assert!(macroscopic_free_energy(&spec, 0.0, &p).unwrap().total > e0);
        }
    }

    #[test]
    fn free_energy_of_the_gaussian() {
        let spec = InteractionSpec::gradient(1, 0.5, 1.0).unwrap();
        let geom = GridGeometry::new(1, 512, 14.0).unwrap();
        let g = gaussian_equilibrium(&spec, geom).unwrap();
        let e = macroscopic_free_energy(&spec, f64::INFINITY, &g).unwrap();
        // Variance 2/β: ∫ξ²/4 μ = 1/(2β), ∫ μ log μ = −½ log(4πe/β).
        let beta = spec.beta;
        let exact = 1.0 / (2.0 * beta) - 0.5 * (4.0 * PI * std::f64::consts::E / beta).ln() / beta;
        assert!((e.total - exact).abs() < 1e-8, "{} vs {exact}", e.total);
        assert_eq!(e.interaction, 0.0);
        let hot = InteractionSpec::gradient(1, 0.5, 2.0).unwrap();
        let e2 = macroscopic_free_energy(&hot, f64::INFINITY, &g).unwrap();
        assert!((e2.entropy - 0.5 * e.entropy).abs() < 1e-15);
    }

    #[test]
    fn iteration_and_initialization_properties() {
        let spec = InteractionSpec::gradient(1, 0.5, 2.0).unwrap();
        let geom = GridGeometry::new(1, 256, 12.0).unwrap();
        let sol = solve_thermal_equilibrium(&spec, 0.0, geom, &opts()).unwrap();
        assert!(sol.history.windows(2).skip(5).all(|w| w[1] <= w[0]));
        let uniform = GridDensity::new(geom, vec![1.0 / (2.0 * geom.extent); geom.n]).unwrap();
        let other = solve_thermal_equilibrium_from(&spec, 0.0, &uniform, &opts()).unwrap();
        assert!(sol.density.l1_distance(&other.density).unwrap() <= 1e-7);
        let gauss = gaussian_equilibrium(&spec, geom).unwrap();
        let mut prev = f64::INFINITY;
        for tau in [0.0, 1.0, 2.0, 4.0, 8.0] {
            let d = solve_thermal_equilibrium(&spec, tau, geom, &opts()).unwrap().density.l1_distance(&gauss).unwrap();
            assert!(d < prev, "τ = {tau}: {d} ≥ {prev}");
            prev = d;
        }
    }

    #[test]
    fn radial_coulomb_equilibrium() {
        let spec = InteractionSpec::gradient(3, 1.0, 1.0).unwrap();
        let grid = RadialGrid::new(3, 400, 12.0).unwrap();
        let sol = solve_thermal_equilibrium_radial(&spec, 0.0, grid, &opts()).unwrap();
        assert!(sol.residual <= 1e-8);
        assert!((sol.density.mass() - 1.0).abs() < 1e-12);
        assert!(equilibrium_residual_radial(&spec, 0.0, &sol.density).unwrap() <= 1e-8);
        let g = gaussian_equilibrium_radial(&spec, grid).unwrap();
        let far = solve_thermal_equilibrium_radial(&spec, 8.0, grid, &opts()).unwrap();
        assert!(far.density.l1_distance(&g).unwrap() < sol.density.l1_distance(&g).unwrap());
    }

    #[test]
    fn bad_inputs() {
        let spec = InteractionSpec::gradient(1, 0.0, 1.0).unwrap();
        let small = GridGeometry::new(1, 64, 3.0).unwrap();
        assert!(solve_thermal_equilibrium(&spec, 0.0, small, &opts()).is_err());
        let geom = GridGeometry::new(1, 64, 14.0).unwrap();
        let few = EquilibriumOptions { max_iter: 1, ..opts() };
        assert!(matches!(
            solve_thermal_equilibrium(&spec, 0.0, geom, &few),
            Err(MfclError::NonConvergence { .. })
        ));
        let bad = EquilibriumOptions { theta: 0.0, ..opts() };
        assert!(solve_thermal_equilibrium(&spec, 0.0, geom, &bad).is_err());
    }
}
