//! Calibrate-then-freeze runs for the almost-positivity and commutator constants.

use mfcl_core::functionals::ConstantsConfig;
use mfcl_core::grid::GridGeometry;
use mfcl_core::InteractionSpec;

use crate::calibrate::{calibrate_constants, calibrate_commutator, calibrate_positivity, Calibration, Family};
use crate::config::{spec_config, CalibrationParams, GridParams, RunConfig};
use crate::error::{HarnessError, Result};
use crate::output::{Check, Manifest, Sink};

fn loggas(name: &str, seed: u64) -> RunConfig {
    let mut c = RunConfig::new(name, seed);
    c.spec = Some(spec_config(&InteractionSpec::gradient(1, 0.0, 2.0).expect("valid spec")));
    c.grid = Some(GridParams { n: 512, extent: 12.0 });
    c.calibration = Some(CalibrationParams::default());
    c
}

pub fn positivity_preset() -> RunConfig {
    loggas("positivity-calibration", 101)
}

pub fn commutator_preset() -> RunConfig {
    loggas("commutator-calibration", 103)
}

/// Instance family on the configured grid.
pub(super) fn family(spec: &InteractionSpec, grid: GridParams, params: &CalibrationParams) -> Result<Family> {
    Ok(Family {
        spec: spec.clone(),
        geom: GridGeometry::new(spec.d, grid.n, grid.extent)?,
        n_min: params.n_min,
        n_max: params.n_max,
    })
}

fn record(m: &mut Manifest, c: &Calibration) -> Result<()> {
    m.result(format!("{}_calibration", c.name), c)?;
    m.check(Check::le(format!("{}_held_out_violations", c.name), c.violations as f64, 0.0));
    Ok(())
}

fn is_frozen(c: &ConstantsConfig) -> bool {
    c.c_frak.is_some() && c.c0.is_some() && c.c_gron.is_some()
}

/// The configured constants when all of `𝖢`, `C₀`, `C_gron` are given, otherwise a fresh
/// calibration on `family`; either way the manifest records what was used.
pub(super) fn frozen_constants(
    cfg: &RunConfig,
    family: &Family,
    params: &CalibrationParams,
    m: &mut Manifest,
    parallel: bool,
) -> Result<ConstantsConfig> {
    if is_frozen(&cfg.constants) {
        return Ok(cfg.constants.clone());
    }
    let (mut constants, pos, com) = calibrate_constants(family, cfg.seed, params, parallel)?;
    for (k, v) in &cfg.constants.provenance {
        constants.provenance.entry(k.clone()).or_insert_with(|| v.clone());
    }
    constants.c_star = cfg.constants.c_star;
    constants.c_ls = cfg.constants.c_ls;
    record(m, &pos)?;
    record(m, &com)?;
    m.constants = constants.clone();
    Ok(constants)
}

fn setup(cfg: &RunConfig) -> Result<(Family, CalibrationParams)> {
    let spec = cfg.interaction()?;
    let grid = cfg.grid.ok_or_else(|| HarnessError::Config("missing [grid]".into()))?;
    let params = cfg.calibration();
    Ok((family(&spec, grid, &params)?, params))
}

pub fn run_positivity(cfg: &RunConfig, m: &mut Manifest, sink: &mut Sink, parallel: bool) -> Result<()> {
    let (fam, params) = setup(cfg)?;
    let (cal, samples) = calibrate_positivity(&fam, cfg.seed, &params, parallel)?;
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| vec![s.n as f64, s.kind as u8 as f64, s.energy, s.base, s.slope, s.ratio()])
        .collect();
    sink.table("positivity_samples.csv", &["n", "kind", "energy", "base", "slope", "ratio"], &rows)?;
    let mut constants = cfg.constants.clone();
    constants.c_frak = Some(cal.constant);
    constants.c0 = Some(cal.constant);
    let p = cal.provenance(cfg.seed, params.margin);
    constants.provenance.insert("c_frak".into(), p.clone());
    constants.provenance.insert("c0".into(), p);
    m.constants = constants;
    record(m, &cal)
}

pub fn run_commutator(cfg: &RunConfig, m: &mut Manifest, sink: &mut Sink, parallel: bool) -> Result<()> {
    let (fam, params) = setup(cfg)?;
    let mut constants = cfg.constants.clone();
    if constants.c_frak.is_none() {
        let (pos, _) = calibrate_positivity(&fam, cfg.seed, &params, parallel)?;
        constants.c_frak = Some(pos.constant);
        constants.c0 = Some(pos.constant);
        let p = pos.provenance(cfg.seed, params.margin);
        constants.provenance.insert("c_frak".into(), p.clone());
        constants.provenance.insert("c0".into(), p);
        m.result("positivity_calibration", &pos)?;
    }
    let (cal, samples) = calibrate_commutator(&fam, cfg.seed, &params, &constants, parallel)?;
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| vec![s.n as f64, s.kind as u8 as f64, s.lhs, s.star, s.energy_plus_o, s.ratio()])
        .collect();
    sink.table("commutator_samples.csv", &["n", "kind", "lhs", "star_norm", "energy_plus_o", "ratio"], &rows)?;
    constants.c_gron = Some(cal.constant);
    constants.provenance.insert("c_gron".into(), cal.provenance(cfg.seed, params.margin));
    m.constants = constants;
    record(m, &cal)
}
