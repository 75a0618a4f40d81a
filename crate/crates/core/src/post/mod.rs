//! Derived quantities: wall shear stress, boundary fluxes and pressures,
//! time-averaged pressure drops, cross-section slices and file output.

mod slice;
mod traces;
mod vtk;

use crate::fem::{MaterialProps, SimulationState};
use crate::mesh::{Mesh, PatchLabel, Vec3};

pub use slice::{slice_velocity, PointLocator, SliceGrid, SlicePlane};
pub use traces::{time_avg_pressure_drop, PressureTrace, WssSummary, PA_PER_MMHG, PRESSURE_TRACE_HEADER, WSS_SUMMARY_HEADER};
pub use vtk::{parse_vtk, read_vtk, volume_vtk, wall_companion_path, wall_vtk, write_vtk, VtkData};

#[derive(Debug, thiserror::Error)]
pub enum PostError {
    #[error("mesh has no {0} patch")]
    UnknownLabel(PatchLabel),
    #[error("plane misses mesh")]
    PlaneMissesMesh,
    #[error("invalid slice plane: {0}")]
    InvalidPlane(String),
    #[error("traces cover [{start}, {end}] s but the window is [{t0}, {t1}] s")]
    WindowNotCovered { start: f64, end: f64, t0: f64, t1: f64 },
    #[error("trace times must be strictly increasing (got {0} s after {1} s)")]
    NonMonotoneTime(f64, f64),
    #[error("VTK line {line}: {message}")]
    VtkParse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Wall shear stress on one WALL facet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallShear {
    /// Index into [`Mesh::facets`].
    pub facet: usize,
    pub traction: Vec3,
    pub shear: Vec3,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WallShearField {
    pub t: f64,
    pub facets: Vec<WallShear>,
}

impl WallShearField {
    pub fn max(&self) -> f64 {
        self.facets.iter().fold(0.0, |m, w| m.max(w.magnitude))
    }

    /// Area-weighted mean magnitude.
    pub fn mean(&self, mesh: &Mesh) -> f64 {
        let (mut s, mut a) = (0.0, 0.0);
        for w in &self.facets {
            let area = mesh.facets()[w.facet].area;
            s += w.magnitude * area;
            a += area;
        }
        if a > 0.0 {
            s / a
        } else {
            0.0
        }
    }

    /// Wall area where the magnitude exceeds `threshold`, m².
    pub fn area_above(&self, mesh: &Mesh, threshold: f64) -> f64 {
        self.facets.iter().filter(|w| w.magnitude > threshold).map(|w| mesh.facets()[w.facet].area).sum()
    }

    /// Area-weighted average of adjacent facet magnitudes at each WALL node
    /// (zero elsewhere). For visualization only.
    pub fn nodal_smoothed(&self, mesh: &Mesh) -> Vec<f64> {
        let mut s = vec![0.0; mesh.n_nodes()];
        let mut a = vec![0.0; mesh.n_nodes()];
        for w in &self.facets {
            let f = &mesh.facets()[w.facet];
            for &n in &f.nodes {
                s[n] += w.magnitude * f.area;
                a[n] += f.area;
            }
        }
        s.iter().zip(&a).map(|(s, a)| if *a > 0.0 { s / a } else { 0.0 }).collect()
    }
}

/// Velocity gradient `G[i][j] = ∂u_i/∂x_j` in tetrahedron `e`.
pub fn velocity_gradient(mesh: &Mesh, state: &SimulationState, e: usize) -> nalgebra::Matrix3<f64> {
    let g = mesh.shape_gradients(e);
    let mut grad = nalgebra::Matrix3::zeros();
    for (a, &n) in mesh.tets()[e].iter().enumerate() {
        grad += state.u[n] * g[a].transpose();
    }
    grad
}

/// Wall shear stress on every WALL facet from the adjacent element's
/// constant velocity gradient and the facet-averaged pressure.
pub fn wss(mesh: &Mesh, state: &SimulationState, props: &MaterialProps) -> WallShearField {
    let facets = mesh
        .facets()
        .iter()
        .enumerate()
        .filter(|(_, f)| f.label == PatchLabel::WALL)
        .map(|(i, f)| {
            let grad = velocity_gradient(mesh, state, f.tet);
            let p = f.nodes.iter().map(|&n| state.p[n]).sum::<f64>() / 3.0;
            let sigma = (grad + grad.transpose()) * props.mu - nalgebra::Matrix3::identity() * p;
            let n = f.normal;
            let traction = sigma * n;
            let shear = traction - n * traction.dot(&n);
            WallShear { facet: i, traction, shear, magnitude: shear.norm() }
        })
        .collect();
    WallShearField { t: state.t, facets }
}

fn facet_flux(state: &SimulationState, f: &crate::mesh::BoundaryFacet) -> f64 {
    let u: Vec3 = f.nodes.iter().map(|&n| state.u[n]).sum::<Vec3>() / 3.0;
    f.area * u.dot(&f.normal)
}

/// Outgoing volumetric flow rate through a patch, m³/s.
pub fn boundary_flux(mesh: &Mesh, state: &SimulationState, label: PatchLabel) -> Result<f64, PostError> {
    if !mesh.has_label(label) {
        return Err(PostError::UnknownLabel(label));
    }
    Ok(mesh.facets_with(label).map(|f| facet_flux(state, f)).sum())
}

/// Net outflow through the whole boundary; zero for a conserving state.
pub fn total_flux(mesh: &Mesh, state: &SimulationState) -> f64 {
    mesh.facets().iter().map(|f| facet_flux(state, f)).sum()
}

/// Area-weighted mean pressure over a patch, Pa.
pub fn avg_pressure(mesh: &Mesh, state: &SimulationState, label: PatchLabel) -> Result<f64, PostError> {
    if !mesh.has_label(label) {
        return Err(PostError::UnknownLabel(label));
    }
    let (mut s, mut a) = (0.0, 0.0);
    for f in mesh.facets_with(label) {
        s += f.area * f.nodes.iter().map(|&n| state.p[n]).sum::<f64>() / 3.0;
        a += f.area;
    }
    Ok(s / a)
}
