//! The frozen experiment catalog.

mod calibration;
mod decay;
mod pde;
mod transform;

use crate::config::RunConfig;
use crate::error::{HarnessError, Result, WithContext};
use crate::output::{Manifest, Sink};

pub const CATALOG: [&str; 9] = [
    "transform-suite",
    "equilibrium-suite",
    "radial-vortex",
    "ou-mehler",
    "decay-gradient-loggas",
    "decay-antisym-riesz",
    "commutator-calibration",
    "positivity-calibration",
    "gronwall-audit",
];

/// Frozen default configuration of an experiment.
pub fn preset(name: &str) -> Result<RunConfig> {
    match name {
        "transform-suite" => Ok(transform::preset()),
        "equilibrium-suite" => Ok(pde::equilibrium_preset()),
        "radial-vortex" => Ok(pde::vortex_preset()),
        "ou-mehler" => Ok(pde::ou_preset()),
        "decay-gradient-loggas" => Ok(decay::loggas_preset()),
        "decay-antisym-riesz" => Ok(decay::riesz_preset()),
        "gronwall-audit" => Ok(decay::audit_preset()),
        "commutator-calibration" => Ok(calibration::commutator_preset()),
        "positivity-calibration" => Ok(calibration::positivity_preset()),
        other => Err(HarnessError::UnknownExperiment(other.into())),
    }
}

/// Runs an experiment and writes its artifacts when `output_dir` is set.
pub fn run_experiment(config: &RunConfig, parallel: bool) -> Result<Manifest> {
    let mut sink = Sink::new(config.output_dir.as_deref())?;
    let mut manifest = Manifest::new(config);
    let name = config.experiment.as_str();
    let run: Runner = match name {
        "transform-suite" => transform::run,
        "equilibrium-suite" => pde::run_equilibrium,
        "radial-vortex" => pde::run_vortex,
        "ou-mehler" => pde::run_ou,
        "decay-gradient-loggas" => decay::run_loggas,
        "decay-antisym-riesz" => decay::run_riesz,
        "gronwall-audit" => decay::run_audit,
        "commutator-calibration" => calibration::run_commutator,
        "positivity-calibration" => calibration::run_positivity,
        other => return Err(HarnessError::UnknownExperiment(other.into())),
    };
    run(config, &mut manifest, &mut sink, parallel).context(|| format!("experiment {name}"))?;
    sink.finish(&mut manifest)?;
    Ok(manifest)
}

type Runner = fn(&RunConfig, &mut Manifest, &mut Sink, bool) -> Result<()>;
