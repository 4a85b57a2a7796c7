//! Run configuration: frozen presets, TOML files and flat `key=value` overrides.

use std::path::{Path, PathBuf};

use mfcl_core::functionals::ConstantsConfig;
use mfcl_core::grid::{GridDensity, GridGeometry};
use mfcl_core::kernels::{BetaValue, SpecConfig};
use mfcl_core::meanfield::TransportMode;
use mfcl_core::transforms::Coords;
use mfcl_core::InteractionSpec;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result, WithContext};
use crate::output::read_density_csv;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    pub seed: u64,
    /// Not part of the manifest: two runs into different directories must agree.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<SpecConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pde: Option<PdeParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleParams>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checkpoints: Vec<f64>,
    #[serde(default)]
    pub constants: ConstantsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationParams>,
    /// Number of randomized cases for suites.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cases: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridParams {
    pub n: usize,
    pub extent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeParams {
    pub coords: Coords,
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "default_transport")]
    pub transport: TransportMode,
    pub init: InitLaw,
}

fn default_transport() -> TransportMode {
    TransportMode::Full
}

/// Initial density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitLaw {
    Gaussian { mean: Vec<f64>, var: f64 },
    /// Equal mixture of two isotropic Gaussians at `±center` along the first axis.
    Bimodal { center: f64, var: f64 },
    File { path: PathBuf },
}

impl InitLaw {
    /// Parses `gaussian:<var>` or `file:<path>`.
    pub fn parse(s: &str, d: usize) -> Result<Self> {
        if let Some(v) = s.strip_prefix("gaussian:") {
            let var = v.parse::<f64>().map_err(|_| HarnessError::Config(format!("bad variance in `{s}`")))?;
            Ok(Self::Gaussian { mean: vec![0.0; d], var })
        } else if let Some(p) = s.strip_prefix("file:") {
            Ok(Self::File { path: PathBuf::from(p) })
        } else {
            Err(HarnessError::Config(format!("init must be gaussian:<var> or file:<path>, got `{s}`")))
        }
    }

    pub fn density(&self, geom: GridGeometry) -> Result<GridDensity> {
        match self {
            Self::Gaussian { mean, var } => {
                if mean.len() != geom.d {
                    return Err(HarnessError::Config(format!("mean has {} entries, d = {}", mean.len(), geom.d)));
                }
                Ok(GridDensity::gaussian(geom, mean, *var)?)
            }
            Self::Bimodal { center, var } => {
                let mut a = vec![0.0; geom.d];
                a[0] = -center;
                let left = GridDensity::gaussian(geom, &a, *var)?;
                a[0] = *center;
                let right = GridDensity::gaussian(geom, &a, *var)?;
                let values = left.values.iter().zip(&right.values).map(|(l, r)| 0.5 * (l + r)).collect();
                let mut mu = GridDensity::new(geom, values)?;
                mu.normalize()?;
                Ok(mu)
            }
            Self::File { path } => {
                let mu = read_density_csv(path)?;
                if mu.geom != geom {
                    return mu.resample(geom).context(|| format!("resampling {}", path.display()));
                }
                Ok(mu)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleParams {
    pub particles: Vec<usize>,
    pub replicas: usize,
    pub dt: f64,
    pub coords: Coords,
    #[serde(default = "default_cap")]
    pub force_cap: f64,
    #[serde(default = "default_min_dist")]
    pub min_dist: f64,
}

fn default_cap() -> f64 {
    1e3
}

fn default_min_dist() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationParams {
    pub train: usize,
    pub held_out: usize,
    /// Safety margin on the fitted maximum ratio `r`: the constant is `r + (margin − 1)|r|`.
    pub margin: f64,
    pub n_min: usize,
    pub n_max: usize,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        Self { train: 100, held_out: 400, margin: 2.0, n_min: 16, n_max: 256 }
    }
}

pub fn spec_config(spec: &InteractionSpec) -> SpecConfig {
    let (drift, m) = match &spec.drift {
        mfcl_core::Drift::Gradient => ("gradient", None),
        mfcl_core::Drift::Antisymmetric(m) => ("antisymmetric", Some(m.clone())),
        mfcl_core::Drift::Mixed { antisym, .. } => ("mixed", Some(antisym.clone())),
    };
    let gradient_weight = match &spec.drift {
        mfcl_core::Drift::Mixed { gradient_weight, .. } => Some(*gradient_weight),
        _ => None,
    };
    SpecConfig { d: spec.d, s: spec.s, drift: drift.into(), m, gradient_weight, beta: BetaValue::from_f64(spec.beta) }
}

impl RunConfig {
    pub fn new(experiment: &str, seed: u64) -> Self {
        Self {
            experiment: experiment.into(),
            seed,
            output_dir: None,
            spec: None,
            grid: None,
            pde: None,
            ensemble: None,
            checkpoints: Vec::new(),
            constants: ConstantsConfig::default(),
            calibration: None,
            cases: None,
        }
    }

    pub fn interaction(&self) -> Result<InteractionSpec> {
        let c = self.spec.clone().ok_or_else(|| HarnessError::Config("missing [spec]".into()))?;
        Ok(InteractionSpec::try_from(c)?)
    }

    pub fn geometry(&self) -> Result<GridGeometry> {
        let g = self.grid.ok_or_else(|| HarnessError::Config("missing [grid]".into()))?;
        let d = self.spec.as_ref().map(|s| s.d).ok_or_else(|| HarnessError::Config("missing [spec]".into()))?;
        Ok(GridGeometry::new(d, g.n, g.extent)?)
    }

    pub fn pde(&self) -> Result<&PdeParams> {
        self.pde.as_ref().ok_or_else(|| HarnessError::Config("missing [pde]".into()))
    }

    pub fn ensemble(&self) -> Result<&EnsembleParams> {
        self.ensemble.as_ref().ok_or_else(|| HarnessError::Config("missing [ensemble]".into()))
    }

    pub fn calibration(&self) -> CalibrationParams {
        self.calibration.unwrap_or_default()
    }

    /// Preset, then TOML file, then `key=value` overrides.
    pub fn resolve(experiment: &str, file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let base = crate::experiments::preset(experiment)?;
        let mut value = toml::Value::try_from(&base).map_err(|e| HarnessError::Config(e.to_string()))?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            let file_value: toml::Value = toml::from_str(&text).context(|| format!("parsing {}", path.display()))?;
            merge(&mut value, file_value);
        }
        for kv in overrides {
            apply_override(&mut value, kv)?;
        }
        let mut cfg: RunConfig = value.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.output_dir = base.output_dir;
        if cfg.experiment != experiment {
            return Err(HarnessError::Config(format!(
                "config names experiment `{}` but `{experiment}` was requested",
                cfg.experiment
            )));
        }
        Ok(cfg)
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// `a.b.c=value`; the value is parsed as a TOML value and falls back to a string.
pub fn apply_override(root: &mut toml::Value, kv: &str) -> Result<()> {
    let (key, raw) = kv.split_once('=').ok_or_else(|| HarnessError::Config(format!("override `{kv}` lacks `=`")))?;
    let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or(toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut node = root;
    for (i, p) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| HarnessError::Config(format!("`{}` is not a table", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            table.insert(p.to_string(), parsed);
            return Ok(());
        }
        node = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Err(HarnessError::Config(format!("empty key in `{kv}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_keys() {
        let mut v = toml::Value::try_from(RunConfig::new("x", 1)).unwrap();
        apply_override(&mut v, "seed=7").unwrap();
        apply_override(&mut v, "grid.n=64").unwrap();
        apply_override(&mut v, "grid.extent=8.0").unwrap();
        let c: RunConfig = v.try_into().unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.grid, Some(GridParams { n: 64, extent: 8.0 }));
    }

    #[test]
    fn init_strings() {
        assert_eq!(InitLaw::parse("gaussian:0.5", 2).unwrap(), InitLaw::Gaussian { mean: vec![0.0, 0.0], var: 0.5 });
        assert!(InitLaw::parse("uniform", 1).is_err());
    }

    #[test]
    fn bimodal_density_has_unit_mass() {
        let geom = GridGeometry::new(1, 512, 10.0).unwrap();
        let mu = InitLaw::Bimodal { center: 3.0, var: 0.1 }.density(geom).unwrap();
        assert!((mu.mass() - 1.0).abs() < 1e-12);
        assert!(mu.mean()[0].abs() < 1e-12);
    }
}
