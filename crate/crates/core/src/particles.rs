//! N-particle SDE ensembles in original and self-similar coordinates.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{MfclError, Result};
use crate::functionals::records::{DiagnosticsRecord, Stat};
use crate::grid::GridDensity;
use crate::kernels::{grad_coefficient, Drift, InteractionSpec};
use crate::par;
use crate::quad::Kahan;
use crate::transforms::{CoordinatePair, Coords};

/// `N` points in `R^d`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleConfig {
    pub d: usize,
    pub positions: Vec<f64>,
}

impl ParticleConfig {
    pub fn new(d: usize, positions: Vec<f64>) -> Result<Self> {
        if d == 0 || positions.len() % d != 0 {
            return Err(MfclError::Domain(format!(
                "{} coordinates do not split into points of dimension {d}",
                positions.len()
            )));
        }
        if positions.iter().any(|v| !v.is_finite()) {
            return Err(MfclError::NonFinite("particle positions".into()));
        }
        Ok(Self { d, positions })
    }

    pub fn n(&self) -> usize {
        self.positions.len() / self.d
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.positions[i * self.d..(i + 1) * self.d]
    }

    /// Smallest pairwise distance (∞ for fewer than two particles).
    pub fn min_pair_distance(&self) -> f64 {
        let n = self.n();
        let mut best = f64::INFINITY;
        for i in 0..n {
            for j in i + 1..n {
                let r2: f64 =
                    self.point(i).iter().zip(self.point(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                best = best.min(r2);
            }
        }
        best.sqrt()
    }

    /// Errors on the first coincident pair.
    pub fn check_distinct(&self) -> Result<()> {
        let n = self.n();
        for i in 0..n {
            for j in i + 1..n {
                if self.point(i) == self.point(j) {
                    return Err(MfclError::Coincident(i, j));
                }
            }
        }
        Ok(())
    }

    /// Empirical second moment `(1/N) Σ |x_i|²`.
    pub fn second_moment(&self) -> f64 {
        self.positions.iter().map(|v| v * v).sum::<f64>() / self.n() as f64
    }

    /// Empirical mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for p in self.positions.chunks_exact(self.d) {
            for a in 0..self.d {
                m[a] += p[a];
            }
        }
        m.iter().map(|v| v / self.n() as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    TamedEuler,
}

/// Ensemble and integrator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub particles: usize,
    pub replicas: usize,
    pub seed: u64,
    pub dt: f64,
    pub scheme: Scheme,
    pub force_cap: f64,
    pub min_dist: f64,
    pub coords: Coords,
    /// When false the pair interaction is switched off (`k ≡ 0`).
    #[serde(default = "default_true")]
    pub interacting: bool,
}

fn default_true() -> bool {
    true
}

impl EnsembleSpec {
    /// Defaults: `F_max = 10³`, `ε_reg = 10⁻⁶`.
    pub fn new(particles: usize, replicas: usize, seed: u64, dt: f64, coords: Coords) -> Self {
        Self {
            particles,
            replicas,
            seed,
            dt,
            scheme: Scheme::TamedEuler,
            force_cap: 1e3,
            min_dist: 1e-6,
            coords,
            interacting: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(MfclError::InvalidSpec(format!("dt = {}", self.dt)));
        }
        if !(self.force_cap > 0.0) {
            return Err(MfclError::InvalidSpec(format!("force cap {}", self.force_cap)));
        }
        if !(self.min_dist >= 0.0) {
            return Err(MfclError::InvalidSpec(format!("min_dist {}", self.min_dist)));
        }
        if self.replicas == 0 || self.particles == 0 {
            return Err(MfclError::InvalidSpec("empty ensemble".into()));
        }
        Ok(())
    }

    /// RNG stream of replica `r`.
    pub fn replica_rng(&self, r: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(r as u64);
        rng
    }
}

/// Precomputed pair-kernel data.
#[derive(Debug, Clone)]
struct PairKernel {
    d: usize,
    s: f64,
    /// `-M`, so that `k(z) = |z|^{-s-2} (-M) z`.
    neg_m: Vec<f64>,
    gradient: bool,
}

impl PairKernel {
    fn new(spec: &InteractionSpec) -> Self {
        let d = spec.d;
        Self {
            d,
            s: spec.s,
            neg_m: spec.drift_matrix().iter().map(|v| -v).collect(),
            gradient: matches!(spec.drift, Drift::Gradient),
        }
    }

    /// `k(z)` scaled by `scale`, with `|z|` clamped below at `eps`. Zero at `z = 0`.
    #[inline]
    fn eval(&self, z: &[f64], eps2: f64, scale: f64, out: &mut [f64]) {
        let r2: f64 = z.iter().map(|v| v * v).sum();
        if r2 == 0.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let c = scale * grad_coefficient(self.s, r2.max(eps2));
        if self.gradient {
            for a in 0..self.d {
                out[a] = c * z[a];
            }
        } else {
            for a in 0..self.d {
                let mut v = 0.0;
                for b in 0..self.d {
                    v += self.neg_m[a * self.d + b] * z[b];
                }
                out[a] = c * v;
            }
        }
    }
}

/// Reusable buffers for the pair sum.
#[derive(Debug, Clone, Default)]
pub struct DriftWork {
    sum: Vec<Kahan>,
}

/// Drift on every particle: `(1/N) Σ_{j≠i} k_τ(x_i − x_j)`, plus `−ξ_i/2` in self-similar
/// coordinates. `time` is `t` or `τ` according to `coords`.
pub fn pairwise_drift(
    spec: &InteractionSpec,
    coords: Coords,
    time: f64,
    x: &ParticleConfig,
    min_dist: f64,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x.positions.len()];
    drift_into(spec, coords, time, x, min_dist, true, &mut out, &mut DriftWork::default())?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn drift_into(
    spec: &InteractionSpec,
    coords: Coords,
    time: f64,
    x: &ParticleConfig,
    min_dist: f64,
    interacting: bool,
    out: &mut [f64],
    work: &mut DriftWork,
) -> Result<()> {
    if x.d != spec.d {
        return Err(MfclError::Domain("particle dimension differs from spec".into()));
    }
    if x.positions.iter().any(|v| !v.is_finite()) {
        return Err(MfclError::NonFinite("particle positions".into()));
    }
    let d = x.d;
    let n = x.n();
    work.sum.clear();
    work.sum.resize(n * d, Kahan::default());
    if interacting && n > 1 {
        let factor = match coords {
            Coords::Original => 1.0,
            Coords::SelfSimilar => spec.tau_factor(time),
        };
        let scale = factor / n as f64;
        let kernel = PairKernel::new(spec);
        let eps2 = min_dist * min_dist;
        let mut z = vec![0.0; d];
        let mut f = vec![0.0; d];
        let p = &x.positions;
        for i in 0..n {
            for j in i + 1..n {
                for a in 0..d {
                    z[a] = p[i * d + a] - p[j * d + a];
                }
                kernel.eval(&z, eps2, scale, &mut f);
                for a in 0..d {
                    work.sum[i * d + a].add(f[a]);
                    work.sum[j * d + a].add(-f[a]);
                }
            }
        }
    }
    for (k, o) in out.iter_mut().enumerate() {
        *o = work.sum[k].value();
        if coords == Coords::SelfSimilar {
            *o -= 0.5 * x.positions[k];
        }
    }
    Ok(())
}

/// One tamed Euler step. Returns the number of particles whose drift hit the cap.
pub fn step_tamed_euler<R: Rng + ?Sized>(
    spec: &InteractionSpec,
    ens: &EnsembleSpec,
    x: &mut ParticleConfig,
    rng: &mut R,
    time: f64,
) -> Result<usize> {
    let mut stepper = Stepper::default();
    stepper.step(spec, ens, x, rng, time, ens.dt)
}

#[derive(Debug, Clone, Default)]
struct Stepper {
    drift: Vec<f64>,
    work: DriftWork,
}

impl Stepper {
    fn step<R: Rng + ?Sized>(
        &mut self,
        spec: &InteractionSpec,
        ens: &EnsembleSpec,
        x: &mut ParticleConfig,
        rng: &mut R,
        time: f64,
        dt: f64,
    ) -> Result<usize> {
        let d = x.d;
        self.drift.resize(x.positions.len(), 0.0);
        drift_into(spec, ens.coords, time, x, ens.min_dist, ens.interacting, &mut self.drift, &mut self.work)?;
        let noise = if spec.is_zero_temperature() { 0.0 } else { (2.0 * dt / spec.beta).sqrt() };
        let mut capped = 0;
        for (p, f) in x.positions.chunks_exact_mut(d).zip(self.drift.chunks_exact(d)) {
            let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            let tame = if norm > ens.force_cap {
                capped += 1;
                ens.force_cap / norm
            } else {
                1.0
            };
            for a in 0..d {
                p[a] += dt * tame * f[a];
                if noise > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    p[a] += noise * z;
                }
            }
        }
        if x.positions.iter().any(|v| !v.is_finite()) {
            return Err(MfclError::NonFinite("particle positions after step".into()));
        }
        Ok(capped)
    }
}

/// Draws initial configurations.
pub trait InitSampler: Sync {
    fn d(&self) -> usize;
    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<ParticleConfig>;
}

/// i.i.d. isotropic Gaussian.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    pub mean: Vec<f64>,
    pub var: f64,
}

impl InitSampler for GaussianSampler {
    fn d(&self) -> usize {
        self.mean.len()
    }

    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<ParticleConfig> {
        let d = self.d();
        let sd = self.var.sqrt();
        let mut pos = Vec::with_capacity(n * d);
        for _ in 0..n {
            for a in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                pos.push(self.mean[a] + sd * z);
            }
        }
        ParticleConfig::new(d, pos)
    }
}

/// i.i.d. from a grid density: node chosen with probability `μ_i h^d`, then uniform in its cell.
#[derive(Debug, Clone)]
pub struct GridSampler {
    density: GridDensity,
    index: WeightedIndex<f64>,
}

impl GridSampler {
    pub fn new(density: GridDensity) -> Result<Self> {
        let index = WeightedIndex::new(&density.values)
            .map_err(|e| MfclError::Invariant(format!("grid sampler weights: {e}")))?;
        Ok(Self { density, index })
    }
}

impl InitSampler for GridSampler {
    fn d(&self) -> usize {
        self.density.d()
    }

    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<ParticleConfig> {
        let geom = self.density.geom;
        let d = geom.d;
        let h = geom.h();
        let mut p = vec![0.0; d];
        let mut pos = Vec::with_capacity(n * d);
        for _ in 0..n {
            let flat = self.index.sample(rng);
            geom.point(flat, &mut p);
            for a in 0..d {
                let u: f64 = rng.random_range(-0.5..0.5);
                pos.push(p[a] + u * h);
            }
        }
        ParticleConfig::new(d, pos)
    }
}

/// Per-replica evaluation at each checkpoint.
pub trait Observer: Sync {
    /// Named scalars; an observer may return nothing at some checkpoints.
    fn observe(&self, checkpoint: usize, time: CoordinatePair, x: &ParticleConfig)
        -> Result<Vec<(String, f64)>>;
}

impl<F> Observer for F
where
    F: Fn(usize, CoordinatePair, &ParticleConfig) -> Result<Vec<(String, f64)>> + Sync,
{
    fn observe(&self, checkpoint: usize, time: CoordinatePair, x: &ParticleConfig)
        -> Result<Vec<(String, f64)>> {
        self(checkpoint, time, x)
    }
}

/// Full output of an ensemble run.
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub records: Vec<DiagnosticsRecord>,
    /// Fraction of particle-steps where the drift cap was active.
    pub cap_fraction: f64,
    /// `snapshots[checkpoint][replica]` when requested.
    pub snapshots: Option<Vec<Vec<ParticleConfig>>>,
}

impl EnsembleRun {
    /// True when the cap was active in more than 1% of particle-steps.
    pub fn cap_flag(&self) -> bool {
        self.cap_fraction > 0.01
    }
}

struct ReplicaOutput {
    values: Vec<Vec<(String, f64)>>,
    capped: u64,
    steps: u64,
    snapshots: Vec<ParticleConfig>,
}

fn check_schedule(horizon: f64, checkpoints: &[f64]) -> Result<()> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(MfclError::Domain(format!("horizon {horizon}")));
    }
    let mut prev = 0.0;
    for &c in checkpoints {
        if !(c >= prev) || c > horizon * (1.0 + 1e-12) {
            return Err(MfclError::Domain(format!(
                "checkpoints must be sorted within [0, {horizon}], got {c}"
            )));
        }
        prev = c;
    }
    Ok(())
}

fn run_replica(
    spec: &InteractionSpec,
    ens: &EnsembleSpec,
    sampler: &dyn InitSampler,
    checkpoints: &[f64],
    observers: &[&dyn Observer],
    r: usize,
    keep: bool,
) -> Result<ReplicaOutput> {
    let mut rng = ens.replica_rng(r);
    let mut x = sampler.sample(ens.particles, &mut rng)?;
    let mut stepper = Stepper::default();
    let mut now = 0.0;
    let mut out = ReplicaOutput { values: Vec::new(), capped: 0, steps: 0, snapshots: Vec::new() };
    for (k, &c) in checkpoints.iter().enumerate() {
        let span = c - now;
        if span > 0.0 {
            let steps = ((span / ens.dt) - 1e-9).ceil().max(1.0) as usize;
            let dt = span / steps as f64;
            for m in 0..steps {
                let time = now + m as f64 * dt;
                out.capped += stepper.step(spec, ens, &mut x, &mut rng, time, dt)? as u64;
                out.steps += x.n() as u64;
            }
            now = c;
        }
        let time = CoordinatePair::from_frame(ens.coords, c)?;
        let mut row = Vec::new();
        for obs in observers {
            row.extend(obs.observe(k, time, &x)?);
        }
        out.values.push(row);
        if keep {
            out.snapshots.push(x.clone());
        }
    }
    Ok(out)
}

/// Runs `R` replicas and reports mean and standard error of every observed scalar.
pub fn simulate_ensemble(
    spec: &InteractionSpec,
    ens: &EnsembleSpec,
    sampler: &dyn InitSampler,
    horizon: f64,
    checkpoints: &[f64],
    observers: &[&dyn Observer],
) -> Result<Vec<DiagnosticsRecord>> {
    Ok(simulate_ensemble_full(spec, ens, sampler, horizon, checkpoints, observers, false, true)?.records)
}

/// [`simulate_ensemble`] with optional snapshots and an explicit parallel switch.
#[allow(clippy::too_many_arguments)]
pub fn simulate_ensemble_full(
    spec: &InteractionSpec,
    ens: &EnsembleSpec,
    sampler: &dyn InitSampler,
    horizon: f64,
    checkpoints: &[f64],
    observers: &[&dyn Observer],
    snapshots: bool,
    parallel: bool,
) -> Result<EnsembleRun> {
    ens.validate()?;
    check_schedule(horizon, checkpoints)?;
    if sampler.d() != spec.d {
        return Err(MfclError::Domain("sampler dimension differs from spec".into()));
    }
    let outputs = par::map_range_with(parallel, ens.replicas, |r| {
        run_replica(spec, ens, sampler, checkpoints, observers, r, snapshots)
    });
    let outputs: Vec<ReplicaOutput> = outputs.into_iter().collect::<Result<_>>()?;
    let capped: u64 = outputs.iter().map(|o| o.capped).sum();
    let steps: u64 = outputs.iter().map(|o| o.steps).sum();
    let cap_fraction = if steps == 0 { 0.0 } else { capped as f64 / steps as f64 };

    let mut records = Vec::with_capacity(checkpoints.len());
    for (k, &c) in checkpoints.iter().enumerate() {
        let time = CoordinatePair::from_frame(ens.coords, c)?;
        let mut samples: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for o in &outputs {
            for (name, v) in &o.values[k] {
                samples.entry(name.clone()).or_default().push(*v);
            }
        }
        let mut values = BTreeMap::new();
        for (name, xs) in samples {
            values.insert(name, Stat::from_samples(&xs));
        }
        values.insert("cap_fraction".into(), Stat::exact(cap_fraction));
        let record = DiagnosticsRecord {
            run_id: String::new(),
            checkpoint: k,
            t: time.t,
            tau: time.tau,
            values,
            constants: None,
        };
        record.validate()?;
        records.push(record);
    }
    let snapshots = snapshots.then(|| {
        (0..checkpoints.len())
            .map(|k| outputs.iter().map(|o| o.snapshots[k].clone()).collect())
            .collect()
    });
    Ok(EnsembleRun { records, cap_fraction, snapshots })
}
