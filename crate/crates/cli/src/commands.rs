//! Waveform and mesh utilities.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::Serialize;

use avf_core::mesh::{default_label_map, load_gmsh, PatchLabel};
use avf_core::waveform::{classify, read_waveform_table, rectify, write_rectified_csv, Classification, WaveformTable};

use crate::CliError;

fn table_with_period(input: &Path, period: Option<f64>) -> Result<WaveformTable, CliError> {
    let mut table = read_waveform_table(input)?;
    if let Some(t) = period {
        if !(t > 0.0) {
            return Err(CliError::Input(format!("period {t} must be positive")));
        }
        table.period = t;
    }
    Ok(table)
}

/// Writes the rectified file and classifies the rectified waveforms.
pub fn cmd_rectify(input: &Path, output: &Path, period: Option<f64>, epsilon: f64) -> Result<Classification, CliError> {
    let table = table_with_period(input, period)?;
    let set = rectify(&table.to_set()?)?;
    write_rectified_csv(&table, output)?;
    Ok(classify(&set, epsilon)?)
}

pub fn cmd_classify(input: &Path, period: Option<f64>, epsilon: f64, rectified: bool) -> Result<Classification, CliError> {
    let set = table_with_period(input, period)?.to_set()?;
    let set = if rectified { rectify(&set)? } else { set };
    Ok(classify(&set, epsilon)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshInfo {
    pub nodes: usize,
    pub tets: usize,
    pub boundary_facets: usize,
    /// m³
    pub volume: f64,
    /// Patch areas in m², by label.
    pub areas: BTreeMap<String, f64>,
    /// Characteristic element length statistics, m.
    pub h_min: f64,
    pub h_mean: f64,
    pub h_max: f64,
}

impl fmt::Display for MeshInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "nodes={}", self.nodes)?;
        writeln!(f, "tets={}", self.tets)?;
        writeln!(f, "boundary_facets={}", self.boundary_facets)?;
        writeln!(f, "volume_m3={:.9e}", self.volume)?;
        for (l, a) in &self.areas {
            writeln!(f, "area_{l}_m2={a:.9e}")?;
        }
        writeln!(f, "h_min_m={:.6e} h_mean_m={:.6e} h_max_m={:.6e}", self.h_min, self.h_mean, self.h_max)
    }
}

fn parse_labels(pairs: &[String]) -> Result<HashMap<String, PatchLabel>, CliError> {
    if pairs.is_empty() {
        return Ok(default_label_map());
    }
    pairs
        .iter()
        .map(|p| {
            let (name, label) = p.split_once('=').ok_or_else(|| CliError::Input(format!("label mapping `{p}` is not NAME=LABEL")))?;
            let label: PatchLabel = label.parse().map_err(|e| CliError::Input(format!("{e}")))?;
            Ok((name.to_string(), label))
        })
        .collect()
}

pub fn cmd_mesh_info(path: &Path, labels: &[String]) -> Result<MeshInfo, CliError> {
    let mesh = load_gmsh(path, &parse_labels(labels)?)?;
    let h: Vec<f64> = (0..mesh.n_el()).map(|e| mesh.characteristic_length(e)).collect();
    let areas = PatchLabel::ALL
        .into_iter()
        .filter(|&l| mesh.has_label(l))
        .map(|l| (l.as_str().to_string(), mesh.patch_area(l)))
        .collect();
    Ok(MeshInfo {
        nodes: mesh.n_nodes(),
        tets: mesh.n_el(),
        boundary_facets: mesh.facets().len(),
        volume: mesh.total_volume(),
        areas,
        h_min: h.iter().copied().fold(f64::INFINITY, f64::min),
        h_mean: h.iter().sum::<f64>() / h.len() as f64,
        h_max: h.iter().copied().fold(0.0, f64::max),
    })
}
