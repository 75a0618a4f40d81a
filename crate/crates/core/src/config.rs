//! JSON run configuration.
//!
//! One document describes a run completely: geometry, boundary flow data,
//! physical constants, numerics and outputs. Unknown fields are rejected and
//! parse errors carry the JSON path of the offending value. Relative paths
//! are resolved against the directory of the configuration file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fem::{MaterialProps, PicardConfig, ProfileShape, RunPlan, SimConfig, Stabilization, TimeScheme};
use crate::krylov::SolverConfig;
use crate::mesh::{default_label_map, generate_junction, generate_tube, load_gmsh, JunctionParams, Mesh, MeshError, PatchLabel};
use crate::post::SlicePlane;
use crate::waveform::{read_waveform_table, rectify, WaveformError, WaveformSet, WaveformTable, DEFAULT_ONE_WAY_EPSILON};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config: invalid value at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("config: {0}")]
    Invalid(String),
    #[error("config: cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSource {
    /// Gmsh MSH 2.2 ASCII file.
    Gmsh { path: PathBuf },
    Tube { radius: f64, length: f64, n_axial: usize, n_ring: usize },
    Junction(JunctionParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Steps between VTK snapshots of the recorded period.
    pub cadence: usize,
    pub vtk: bool,
    /// WSS level (Pa) whose exceedance area is reported.
    pub wss_threshold: f64,
    /// Steps between checkpoints; the final state is always checkpointed.
    pub checkpoint_every: Option<usize>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("output"), cadence: 25, vtk: true, wss_threshold: 10.0, checkpoint_every: None }
    }
}

fn default_true() -> bool {
    true
}

fn default_periods() -> usize {
    3
}

fn default_threads() -> usize {
    1
}

fn default_epsilon() -> f64 {
    DEFAULT_ONE_WAY_EPSILON
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshSource,
    /// Gmsh physical-group name to patch label; empty means the names
    /// `PA`, `DA`, `FV`, `WALL`.
    #[serde(default)]
    pub labels: BTreeMap<String, PatchLabel>,
    /// Waveform CSV (`t_s,Q_PA_mL_min,Q_DA_mL_min,Q_FV_mL_min`).
    pub waveform: PathBuf,
    /// Cardiac period (s). Required: it is never inferred.
    pub period: f64,
    /// Replace DA by the mass-conservation closure before running.
    #[serde(default = "default_true")]
    pub rectify: bool,
    #[serde(default = "default_epsilon")]
    pub one_way_epsilon: f64,
    #[serde(default = "default_periods")]
    pub n_periods: usize,
    #[serde(default)]
    pub material: MaterialProps,
    #[serde(default)]
    pub scheme: TimeScheme,
    #[serde(default)]
    pub stabilization: Stabilization,
    #[serde(default)]
    pub picard: PicardConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub profile: ProfileShape,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub slices: Vec<SlicePlane>,
    /// Worker threads; part of the reproducibility contract.
    #[serde(default = "default_threads")]
    pub threads: usize,
}

impl RunConfig {
    /// Parses without touching the file system.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::Parse { path, message: e.into_inner().to_string() }
        })
    }

    /// Reads, parses, resolves relative paths and validates.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::from_json(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.waveform);
        fix(&mut self.output.dir);
        if let MeshSource::Gmsh { path } = &mut self.mesh {
            fix(path);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.sim_config().props.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.scheme.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.plan()?;
        if !(self.one_way_epsilon >= 0.0) {
            return bad(format!("one_way_epsilon {} must be non-negative", self.one_way_epsilon));
        }
        if self.picard.max_iter == 0 {
            return bad("picard.max_iter must be at least 1".into());
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return bad("solver.tol and solver.max_iter must be positive".into());
        }
        if self.output.cadence == 0 || self.output.checkpoint_every == Some(0) {
            return bad("output.cadence and output.checkpoint_every must be positive".into());
        }
        if !(self.output.wss_threshold >= 0.0) {
            return bad("output.wss_threshold must be non-negative".into());
        }
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        for (i, s) in self.slices.iter().enumerate() {
            s.validate().map_err(|e| ConfigError::Invalid(format!("slices[{i}]: {e}")))?;
        }
        if !self.waveform.is_file() {
            return bad(format!("waveform file {} does not exist", self.waveform.display()));
        }
        if let MeshSource::Gmsh { path } = &self.mesh {
            if !path.is_file() {
                return bad(format!("mesh file {} does not exist", path.display()));
            }
        }
        Ok(())
    }

    /// Rejects a period that is not a whole number of steps.
    pub fn plan(&self) -> Result<RunPlan, ConfigError> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(ConfigError::Invalid(format!("period {} must be positive", self.period)));
        }
        RunPlan::new(self.period, self.scheme.dt, self.n_periods).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            props: self.material,
            scheme: self.scheme,
            stab: self.stabilization,
            picard: self.picard,
            solver: self.solver,
            profile: self.profile,
        }
    }

    pub fn label_map(&self) -> std::collections::HashMap<String, PatchLabel> {
        if self.labels.is_empty() {
            default_label_map()
        } else {
            self.labels.iter().map(|(k, v)| (k.clone(), *v)).collect()
        }
    }

    pub fn build_mesh(&self) -> Result<Mesh, MeshError> {
        match &self.mesh {
            MeshSource::Gmsh { path } => load_gmsh(path, &self.label_map()),
            MeshSource::Tube { radius, length, n_axial, n_ring } => generate_tube(*radius, *length, *n_axial, *n_ring),
            MeshSource::Junction(p) => generate_junction(p),
        }
    }

    /// The waveform table with the configured period, and the waveforms
    /// the solver uses (rectified unless disabled).
    pub fn load_waveforms(&self) -> Result<(WaveformTable, WaveformSet), WaveformError> {
        let mut table = read_waveform_table(&self.waveform)?;
        if table.period_declared && (table.period - self.period).abs() > 1e-9 * self.period {
            return Err(WaveformError::Invalid(format!(
                "waveform declares period {} s but the configuration says {} s",
                table.period, self.period
            )));
        }
        table.period = self.period;
        let set = table.to_set()?;
        let set = if self.rectify { rectify(&set)? } else { set };
        Ok((table, set))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "mesh": {"tube": {"radius": 0.002, "length": 0.02, "n_axial": 4, "n_ring": 2}},
        "waveform": "w.csv",
        "period": 0.8
    }"#;

    #[test]
    fn defaults_fill_everything_else() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.n_periods, 3);
        assert_eq!(c.scheme.dt, 2e-4);
        assert_eq!(c.material, MaterialProps::default());
        assert_eq!(c.output.cadence, 25);
        assert_eq!(c.threads, 1);
        assert!(c.rectify);
        assert_eq!(c.plan().unwrap().total_steps(), 12_000);
    }

    #[test]
    fn unknown_field_reports_its_path() {
        let text = MINIMAL.replace("\"period\": 0.8", "\"period\": 0.8, \"material\": {\"rho\": 1000, \"mu_typo\": 1}");
        match RunConfig::from_json(&text) {
            Err(ConfigError::Parse { path, message }) => {
                assert_eq!(path, "material.mu_typo");
                assert!(message.contains("unknown field"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn period_must_be_whole_steps() {
        let text = MINIMAL.replace("0.8", "0.80003");
        let c = RunConfig::from_json(&text).unwrap();
        assert!(matches!(c.plan(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn missing_period_is_rejected() {
        let text = MINIMAL.replace(",\n        \"period\": 0.8", "");
        assert!(matches!(RunConfig::from_json(&text), Err(ConfigError::Parse { .. })));
    }
}
