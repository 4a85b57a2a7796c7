//! Artifacts: JSON-lines records, CSV fields and the JSON manifest.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use mfcl_core::functionals::{ConstantsConfig, DiagnosticsRecord};
use mfcl_core::grid::{GridDensity, GridGeometry};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::fit::DecayFit;

/// One pass/fail comparison recorded by an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: String,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    pub fn le(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, relation: "<=".into(), threshold, pass: value <= threshold }
    }

    pub fn ge(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, relation: ">=".into(), threshold, pass: value >= threshold }
    }

    pub fn lt(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, relation: "<".into(), threshold, pass: value < threshold }
    }

    /// `|value − target| ≤ tol`, recorded as the deviation.
    pub fn near(name: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        let dev = (value - target).abs();
        Self { name: name.into(), value, relation: format!("within {tol:e} of"), threshold: target, pass: dev <= tol }
    }
}

/// Everything a run reports. Contains no timings so that reruns are bit-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub version: String,
    pub config: RunConfig,
    pub constants: ConstantsConfig,
    pub results: BTreeMap<String, serde_json::Value>,
    pub fits: BTreeMap<String, DecayFit>,
    pub checks: Vec<Check>,
    pub flags: Vec<String>,
    pub artifacts: Vec<String>,
}

impl Manifest {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            experiment: config.experiment.clone(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            constants: config.constants.clone(),
            results: BTreeMap::new(),
            fits: BTreeMap::new(),
            checks: Vec::new(),
            flags: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn result(&mut self, key: impl Into<String>, value: impl Serialize) -> Result<()> {
        self.results.insert(key.into(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn find_check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Writes artifacts under an optional directory; without one everything stays in memory.
#[derive(Debug, Default)]
pub struct Sink {
    dir: Option<PathBuf>,
    written: Vec<String>,
}

impl Sink {
    pub fn new(dir: Option<&Path>) -> Result<Self> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d).map_err(|e| HarnessError::io(d, e))?;
        }
        Ok(Self { dir: dir.map(Path::to_path_buf), written: Vec::new() })
    }

    fn write(&mut self, name: &str, body: &[u8]) -> Result<()> {
        self.written.push(name.to_string());
        if let Some(d) = &self.dir {
            let path = d.join(name);
            std::fs::write(&path, body).map_err(|e| HarnessError::io(&path, e))?;
        }
        Ok(())
    }

    pub fn records(&mut self, name: &str, records: &[DiagnosticsRecord]) -> Result<()> {
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        self.write(name, &buf)
    }

    pub fn density(&mut self, name: &str, mu: &GridDensity) -> Result<()> {
        self.write(name, density_csv(mu).as_bytes())
    }

    pub fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let mut s = header.join(",");
        s.push('\n');
        for r in rows {
            let line: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        self.write(name, s.as_bytes())
    }

    /// Records the artifact list in the manifest and writes it.
    pub fn finish(mut self, manifest: &mut Manifest) -> Result<()> {
        manifest.artifacts = self.written.clone();
        let body = manifest.to_json()?;
        self.write("manifest.json", body.as_bytes())
    }
}

/// CSV with a `# d=…,n=…,extent=…` header line, then coordinates and the value.
pub fn density_csv(mu: &GridDensity) -> String {
    let g = mu.geom;
    let mut s = format!("# d={},n={},extent={:e}\n", g.d, g.n, g.extent);
    let names: Vec<String> = (0..g.d).map(|a| format!("x{a}")).collect();
    s.push_str(&names.join(","));
    s.push_str(",density\n");
    let mut p = vec![0.0; g.d];
    for (i, v) in mu.values.iter().enumerate() {
        g.point(i, &mut p);
        for x in &p {
            s.push_str(&format!("{x:e},"));
        }
        s.push_str(&format!("{v:e}\n"));
    }
    s
}

pub fn read_density_csv(path: &Path) -> Result<GridDensity> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_density_csv(&text)
}

pub fn parse_density_csv(text: &str) -> Result<GridDensity> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| HarnessError::Input("empty density file".into()))?;
    let meta = header
        .strip_prefix('#')
        .ok_or_else(|| HarnessError::Input("density file must start with `# d=…,n=…,extent=…`".into()))?;
    let mut kv = BTreeMap::new();
    for part in meta.split(',') {
        if let Some((k, v)) = part.trim().split_once('=') {
            kv.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| kv.get(k).ok_or_else(|| HarnessError::Input(format!("density header lacks `{k}`")));
    let bad = |k: &str| HarnessError::Input(format!("bad `{k}` in density header"));
    let d: usize = get("d")?.parse().map_err(|_| bad("d"))?;
    let n: usize = get("n")?.parse().map_err(|_| bad("n"))?;
    let extent: f64 = get("extent")?.parse().map_err(|_| bad("extent"))?;
    let geom = GridGeometry::new(d, n, extent)?;
    lines.next();
    let mut values = Vec::with_capacity(geom.len());
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let last = line.rsplit(',').next().unwrap_or("");
        let v: f64 = last.trim().parse().map_err(|_| HarnessError::Input(format!("row {}: bad value `{last}`", k + 1)))?;
        values.push(v);
    }
    if values.len() != geom.len() {
        return Err(HarnessError::Input(format!("{} values for a grid of {}", values.len(), geom.len())));
    }
    Ok(GridDensity::new(geom, values)?)
}

/// Particles as CSV rows of `d` coordinates, optional header.
pub fn parse_particles_csv(text: &str) -> Result<mfcl_core::particles::ParticleConfig> {
    let mut d = None;
    let mut pos = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.trim().parse::<f64>()).collect();
        let Ok(row) = parsed else {
            if pos.is_empty() && d.is_none() {
                continue;
            }
            return Err(HarnessError::Input(format!("bad particle row `{line}`")));
        };
        match d {
            None => d = Some(row.len()),
            Some(k) if k != row.len() => return Err(HarnessError::Input("ragged particle rows".into())),
            _ => {}
        }
        pos.extend(row);
    }
    let d = d.ok_or_else(|| HarnessError::Input("no particles".into()))?;
    Ok(mfcl_core::particles::ParticleConfig::new(d, pos)?)
}

pub fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    f.write_all(body.as_bytes()).map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_csv_round_trips() {
        let geom = GridGeometry::new(2, 8, 3.0).unwrap();
        let mu = GridDensity::gaussian(geom, &[0.1, -0.2], 0.7).unwrap();
        let back = parse_density_csv(&density_csv(&mu)).unwrap();
        assert_eq!(back.geom, geom);
        assert_eq!(back.values, mu.values);
    }

    #[test]
    fn particle_csv_with_header() {
        let x = parse_particles_csv("x,y\n0.5,1\n-1,2\n").unwrap();
        assert_eq!((x.d, x.n()), (2, 2));
        assert!(parse_particles_csv("1,2\n3\n").is_err());
    }
}
