//! Calibrate-then-freeze for the unspecified constants.
//!
//! Each constant is the largest ratio observed on a training set of randomized
//! instances, widened by a margin, then validated on held-out instances drawn
//! from the same generator with disjoint seeds.

use std::collections::BTreeMap;

use mfcl_core::conv::{Convolver, KernelSet};
use mfcl_core::functionals::corrections::{correction_o_n1, positivity_defect};
use mfcl_core::functionals::energy::{modulated_energy_with, BackgroundField};
use mfcl_core::functionals::commutator::CommutatorBackground;
use mfcl_core::functionals::{CommutatorKernel, ConstantsConfig, VectorField};
use mfcl_core::grid::{GridDensity, GridGeometry};
use mfcl_core::par;
use mfcl_core::particles::{GridSampler, InitSampler, ParticleConfig};
use mfcl_core::InteractionSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::CalibrationParams;
use crate::error::Result;

/// How a configuration is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfigKind {
    /// i.i.d. from `μ`.
    Iid,
    /// i.i.d. from `μ`, then relaxed by gradient descent on `F_N(·, μ)`.
    Relaxed,
    /// i.i.d. from `μ` with a quarter of the particles pulled towards one point.
    Clustered,
}

/// One randomized `(X, μ, v)` instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub kind: ConfigKind,
    pub x: ParticleConfig,
    pub mu: GridDensity,
    /// Frequencies, phases and amplitudes of the test field.
    field: Vec<(Vec<f64>, f64, Vec<f64>)>,
}

impl Instance {
    pub fn field(&self) -> Result<VectorField> {
        let d = self.mu.geom.d;
        let modes = self.field.clone();
        Ok(VectorField::from_fn(self.mu.geom, move |x| {
            let mut v = vec![0.0; d];
            for (w, phase, amp) in &modes {
                let arg: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + phase;
                let s = arg.sin();
                for a in 0..d {
                    v[a] += amp[a] * s;
                }
            }
            v
        })?)
    }
}

/// Instance generator for a fixed interaction and grid.
#[derive(Debug, Clone)]
pub struct Family {
    pub spec: InteractionSpec,
    pub geom: GridGeometry,
    pub n_min: usize,
    pub n_max: usize,
}

fn random_density(geom: GridGeometry, rng: &mut ChaCha8Rng) -> Result<GridDensity> {
    let d = geom.d;
    let scale = geom.extent / 6.0;
    if rng.random_bool(0.5) {
        let var = rng.random_range(0.3..1.0) * scale * scale;
        let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-0.3..0.3) * scale).collect();
        Ok(GridDensity::gaussian(geom, &mean, var)?)
    } else {
        let c = rng.random_range(0.6..1.5) * scale;
        let var = rng.random_range(0.1..0.4) * scale * scale;
        let mut a = vec![0.0; d];
        a[0] = c;
        let left = GridDensity::gaussian(geom, &a, var)?;
        a[0] = -c;
        let right = GridDensity::gaussian(geom, &a, var)?;
        let w = rng.random_range(0.3..0.7);
        let values = left.values.iter().zip(&right.values).map(|(l, r)| w * l + (1.0 - w) * r).collect();
        let mut mu = GridDensity::new(geom, values)?;
        mu.normalize()?;
        Ok(mu)
    }
}

/// Gradient descent on `F_N(·, μ)` with displacements capped at a fraction of the mean spacing.
fn relax(spec: &InteractionSpec, mu: &GridDensity, x: &mut ParticleConfig, steps: usize) -> Result<()> {
    let d = x.d;
    let n = x.n();
    let conv = Convolver::new(mu.geom, spec.s, KernelSet::GRADIENT);
    let field = conv.gradient(&mu.values);
    let spacing = (mu.sup() * n as f64).powf(-1.0 / d as f64);
    let cap = 0.1 * spacing;
    let limit = mu.geom.extent - 2.0 * mu.geom.h();
    let mut force = vec![0.0; n * d];
    for _ in 0..steps {
        force.iter_mut().for_each(|f| *f = 0.0);
        let p = &x.positions;
        for i in 0..n {
            for j in i + 1..n {
                let mut r2 = 0.0;
                for a in 0..d {
                    let z = p[i * d + a] - p[j * d + a];
                    r2 += z * z;
                }
                let c = mfcl_core::kernels::grad_coefficient(spec.s, r2.max(1e-300)) / n as f64;
                for a in 0..d {
                    let z = p[i * d + a] - p[j * d + a];
                    force[i * d + a] += c * z;
                    force[j * d + a] -= c * z;
                }
            }
        }
        for i in 0..n {
            let pt = &x.positions[i * d..(i + 1) * d];
            for a in 0..d {
                // −∇g = z|z|^{−s−2} is the repulsion; ∇(g*μ) pulls towards the mass.
                force[i * d + a] += mu.geom.interpolate(&field[a], pt)?;
            }
        }
        let norms: Vec<f64> = force.chunks_exact(d).map(|f| f.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        let mean = norms.iter().sum::<f64>() / n as f64;
        if !(mean > 0.0) {
            break;
        }
        let eta = 0.05 * spacing / mean;
        for i in 0..n {
            let step = eta.min(cap / norms[i].max(f64::MIN_POSITIVE));
            for a in 0..d {
                let v = &mut x.positions[i * d + a];
                *v = (*v + step * force[i * d + a]).clamp(-limit, limit);
            }
        }
    }
    Ok(())
}

impl Family {
    /// Instance `index` of the stream `stream` (training and held-out use different streams).
    pub fn instance(&self, seed: u64, stream: u64, index: usize) -> Result<Instance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index as u64);
        rng.set_stream(stream);
        let d = self.geom.d;
        let mu = random_density(self.geom, &mut rng)?;
        let n = rng.random_range(self.n_min..=self.n_max);
        let kind = match index % 3 {
            0 => ConfigKind::Iid,
            1 => ConfigKind::Relaxed,
            _ => ConfigKind::Clustered,
        };
        let sampler = GridSampler::new(mu.clone())?;
        let mut x = sampler.sample(n, &mut rng)?;
        match kind {
            ConfigKind::Iid => {}
            ConfigKind::Relaxed => relax(&self.spec, &mu, &mut x, 60)?,
            ConfigKind::Clustered => {
                let centre = x.point(0).to_vec();
                let pull = rng.random_range(0.5..0.95);
                for i in (1..n).step_by(4) {
                    for a in 0..d {
                        let v = &mut x.positions[i * d + a];
                        *v = centre[a] + (1.0 - pull) * (*v - centre[a]);
                    }
                }
            }
        }
        let scale = self.geom.extent / 6.0;
        let field = (0..3)
            .map(|_| {
                let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0) / scale).collect();
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                let amp: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                (w, phase, amp)
            })
            .collect();
        Ok(Instance { kind, x, mu, field })
    }

    fn instances(&self, seed: u64, stream: u64, count: usize, parallel: bool) -> Result<Vec<Instance>> {
        par::map_range_with(parallel, count, |i| self.instance(seed, stream, i)).into_iter().collect()
    }
}

/// `r + (margin − 1)|r|`.
pub fn widen(r: f64, margin: f64) -> f64 {
    r + (margin - 1.0) * r.abs()
}

/// Per-instance quantities for the almost-positivity inequality `F_N ≥ −(base + 𝖢·slope)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositivitySample {
    pub n: usize,
    pub kind: ConfigKind,
    pub energy: f64,
    pub base: f64,
    pub slope: f64,
}

impl PositivitySample {
    /// Smallest constant that makes the inequality hold here.
    pub fn ratio(&self) -> f64 {
        (-self.energy - self.base) / self.slope
    }

    pub fn holds(&self, c: f64) -> bool {
        self.energy + self.base + c * self.slope >= 0.0
    }
}

fn positivity_sample(spec: &InteractionSpec, inst: &Instance) -> Result<PositivitySample> {
    let n = inst.x.n();
    let m = inst.mu.sup();
    let bg = BackgroundField::new(&inst.mu, spec.s)?;
    let energy = modulated_energy_with(&bg, &inst.x)?;
    let base = positivity_defect(spec, n, m, 0.0)?;
    let slope = positivity_defect(spec, n, m, 1.0)? - base;
    Ok(PositivitySample { n, kind: inst.kind, energy, base, slope })
}

/// Per-instance quantities for `|LHS| ≤ C ‖v‖_* (F_N + o_N(1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommutatorSample {
    pub n: usize,
    pub kind: ConfigKind,
    pub lhs: f64,
    pub star: f64,
    pub energy_plus_o: f64,
}

impl CommutatorSample {
    pub fn ratio(&self) -> f64 {
        if self.energy_plus_o <= 0.0 {
            f64::INFINITY
        } else {
            self.lhs.abs() / (self.star * self.energy_plus_o)
        }
    }

    pub fn holds(&self, c: f64) -> bool {
        self.energy_plus_o > 0.0 && self.lhs.abs() <= c * self.star * self.energy_plus_o
    }
}

fn commutator_sample(spec: &InteractionSpec, inst: &Instance, constants: &ConstantsConfig) -> Result<CommutatorSample> {
    let n = inst.x.n();
    let v = inst.field()?;
    let star = mfcl_core::functionals::star_norm(spec, &v)?;
    let lhs = CommutatorBackground::new(spec, &v, &inst.mu, CommutatorKernel::GradG)?.evaluate(&inst.x)?.total;
    let bg = BackgroundField::new(&inst.mu, spec.s)?;
    let energy = modulated_energy_with(&bg, &inst.x)?;
    let o = correction_o_n1(spec, n, inst.mu.sup(), constants)?;
    Ok(CommutatorSample { n, kind: inst.kind, lhs, star, energy_plus_o: energy + o })
}

/// Outcome of one calibrate-and-validate pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub name: String,
    pub max_ratio: f64,
    pub constant: f64,
    pub train: usize,
    pub held_out: usize,
    pub violations: usize,
    /// Largest held-out ratio over the constant.
    pub worst_held_out: f64,
    pub by_kind: BTreeMap<String, f64>,
}

impl Calibration {
    pub fn provenance(&self, seed: u64, margin: f64) -> String {
        format!(
            "max ratio {:e} over {} training instances (seed {seed}), margin {margin}; {} held-out violations of {}",
            self.max_ratio, self.train, self.violations, self.held_out
        )
    }
}

fn kind_name(k: ConfigKind) -> String {
    match k {
        ConfigKind::Iid => "iid",
        ConfigKind::Relaxed => "relaxed",
        ConfigKind::Clustered => "clustered",
    }
    .into()
}

fn summarize(
    name: &str,
    train: &[(ConfigKind, f64)],
    held: &[(ConfigKind, f64, bool)],
    margin: f64,
    constant: Option<f64>,
) -> Calibration {
    let max_ratio = train.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    let constant = constant.unwrap_or_else(|| widen(max_ratio, margin));
    let mut by_kind = BTreeMap::new();
    for (k, r) in train {
        let e = by_kind.entry(kind_name(*k)).or_insert(f64::NEG_INFINITY);
        *e = f64::max(*e, *r);
    }
    let violations = held.iter().filter(|h| !h.2).count();
    let worst = held.iter().map(|h| h.1).fold(f64::NEG_INFINITY, f64::max);
    Calibration {
        name: name.into(),
        max_ratio,
        constant,
        train: train.len(),
        held_out: held.len(),
        violations,
        worst_held_out: worst,
        by_kind,
    }
}

const TRAIN_STREAM: u64 = 1;
const HELD_OUT_STREAM: u64 = 2;

/// Positivity constants: `𝖢` for `F_N ≥ −B(‖μ‖_∞)` and `C₀` for `F̄_N + ō_N ≥ 0` at `τ = 0`.
/// At `τ = 0` the two inequalities differ only in the constant's name when `s ≥ d − 2`, and
/// in the sub-Coulomb case `ō` has the larger `N^{−α₁/(1+s)}` factor, so one fit serves both.
pub fn calibrate_positivity(
    family: &Family,
    seed: u64,
    params: &CalibrationParams,
    parallel: bool,
) -> Result<(Calibration, Vec<PositivitySample>)> {
    let sample = |stream, count| -> Result<Vec<PositivitySample>> {
        let inst = family.instances(seed, stream, count, parallel)?;
        par::map_range_with(parallel, inst.len(), |i| positivity_sample(&family.spec, &inst[i])).into_iter().collect()
    };
    let train = sample(TRAIN_STREAM, params.train)?;
    let held = sample(HELD_OUT_STREAM, params.held_out)?;
    let tr: Vec<(ConfigKind, f64)> = train.iter().map(|s| (s.kind, s.ratio())).collect();
    let max_ratio = tr.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    let c = widen(max_ratio, params.margin);
    let ho: Vec<(ConfigKind, f64, bool)> = held.iter().map(|s| (s.kind, s.ratio(), s.holds(c))).collect();
    let mut all = train;
    all.extend(held);
    Ok((summarize("positivity", &tr, &ho, params.margin, Some(c)), all))
}

/// Commutator constant `C` of `|∬(v(x)−v(y))·∇g(x−y) d(emp−μ)^{⊗2}| ≤ C ‖v‖_* (F_N + o_N(1))`,
/// with `o_N(1)` built from an already calibrated `𝖢`.
pub fn calibrate_commutator(
    family: &Family,
    seed: u64,
    params: &CalibrationParams,
    constants: &ConstantsConfig,
    parallel: bool,
) -> Result<(Calibration, Vec<CommutatorSample>)> {
    let sample = |stream, count| -> Result<Vec<CommutatorSample>> {
        let inst = family.instances(seed.wrapping_add(0x5eed), stream, count, parallel)?;
        par::map_range_with(parallel, inst.len(), |i| commutator_sample(&family.spec, &inst[i], constants))
            .into_iter()
            .collect()
    };
    let train = sample(TRAIN_STREAM, params.train)?;
    let held = sample(HELD_OUT_STREAM, params.held_out)?;
    let tr: Vec<(ConfigKind, f64)> = train.iter().map(|s| (s.kind, s.ratio())).collect();
    let max_ratio = tr.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    let c = widen(max_ratio, params.margin);
    let ho: Vec<(ConfigKind, f64, bool)> = held.iter().map(|s| (s.kind, s.ratio(), s.holds(c))).collect();
    let mut all = train;
    all.extend(held);
    Ok((summarize("commutator", &tr, &ho, params.margin, Some(c)), all))
}

/// Both calibrations, returned as a frozen constants set.
pub fn calibrate_constants(
    family: &Family,
    seed: u64,
    params: &CalibrationParams,
    parallel: bool,
) -> Result<(ConstantsConfig, Calibration, Calibration)> {
    let (pos, _) = calibrate_positivity(family, seed, params, parallel)?;
    let mut constants = ConstantsConfig { c_frak: Some(pos.constant), c0: Some(pos.constant), ..Default::default() };
    let (com, _) = calibrate_commutator(family, seed, params, &constants, parallel)?;
    constants.c_gron = Some(com.constant);
    let p = pos.provenance(seed, params.margin);
    constants.provenance.insert("c_frak".into(), p.clone());
    constants.provenance.insert("c0".into(), p);
    constants.provenance.insert("c_gron".into(), com.provenance(seed, params.margin));
    Ok((constants, pos, com))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widening_moves_away_from_zero_ratio() {
        assert_eq!(widen(1.5, 2.0), 3.0);
        assert_eq!(widen(-1.5, 2.0), 0.0);
        assert_eq!(widen(0.0, 2.0), 0.0);
    }

    #[test]
    fn instances_are_reproducible() {
        let spec = InteractionSpec::gradient(1, 0.0, 2.0).unwrap();
        let fam = Family { spec, geom: GridGeometry::new(1, 256, 12.0).unwrap(), n_min: 8, n_max: 32 };
        for i in 0..3 {
            let a = fam.instance(5, 1, i).unwrap();
            let b = fam.instance(5, 1, i).unwrap();
            assert_eq!(a.x, b.x);
            assert_eq!(a.mu, b.mu);
        }
        assert_ne!(fam.instance(5, 1, 0).unwrap().x, fam.instance(5, 2, 0).unwrap().x);
    }

    #[test]
    fn relaxation_lowers_the_energy() {
        let spec = InteractionSpec::gradient(1, 0.0, 2.0).unwrap();
        let geom = GridGeometry::new(1, 512, 12.0).unwrap();
        let mu = GridDensity::gaussian(geom, &[0.0], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = GridSampler::new(mu.clone()).unwrap().sample(64, &mut rng).unwrap();
        let bg = BackgroundField::new(&mu, 0.0).unwrap();
        let before = modulated_energy_with(&bg, &x).unwrap();
        relax(&spec, &mu, &mut x, 60).unwrap();
        let after = modulated_energy_with(&bg, &x).unwrap();
        assert!(after < before, "{before} -> {after}");
    }
}
