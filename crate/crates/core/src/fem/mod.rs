//! Stabilized P1/P1 finite elements for the incompressible Navier–Stokes
//! equations on tetrahedral meshes.
//!
//! Velocity and pressure are both continuous piecewise linear. Equal-order
//! interpolation and convection dominance are handled with SUPG, PSPG and
//! LSIC (grad-div) terms. Time marching uses the theta scheme with Picard
//! linearization; every linear system is solved with GPBi-CG.
//!
//! Units are SI throughout. Flow rates follow the waveform convention:
//! positive is outgoing through a patch.

mod assembly;
mod checkpoint;
mod inflow;
mod simulation;
mod tau;

use serde::{Deserialize, Serialize};

use crate::krylov::{KrylovError, SolveReport};
use crate::mesh::{PatchLabel, Vec3};

pub use assembly::{apply_dirichlet, assemble, Assembler, KernelParams};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use inflow::{build_inflow_profile, InflowProfile};
pub use simulation::{run, RunPlan, SimConfig, Simulation, SteadyReport, StepEvent, StepReport};
pub use tau::{tau_lsic, tau_pspg, tau_supg};

#[derive(Debug, thiserror::Error)]
pub enum FemError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("mesh has no {0} patch but its waveform is nonzero")]
    MissingPatch(PatchLabel),
    #[error("{label} patch has no interior nodes; refine the mesh so the inflow profile can be resolved")]
    CoarsePatch { label: PatchLabel },
    #[error("non-finite {what} at step {step} (t = {t} s)")]
    NonFinite { step: usize, t: f64, what: String },
    #[error(
        "linear solver failed at step {step} (t = {t} s): residual {:.3e} after {} iterations{}",
        report.residual,
        report.iterations,
        if report.breakdown { " (breakdown)" } else { "" }
    )]
    Solver { step: usize, t: f64, report: SolveReport },
    #[error(transparent)]
    Krylov(#[from] KrylovError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialProps {
    /// Density, kg/m³.
    pub rho: f64,
    /// Dynamic viscosity, Pa·s.
    pub mu: f64,
}

impl Default for MaterialProps {
    fn default() -> Self {
        MaterialProps { rho: 1060.0, mu: 2.66e-3 }
    }
}

impl MaterialProps {
    pub fn nu(&self) -> f64 {
        self.mu / self.rho
    }

    pub fn validate(&self) -> Result<(), FemError> {
        if !(self.rho > 0.0 && self.rho.is_finite() && self.mu > 0.0 && self.mu.is_finite()) {
            return Err(FemError::InvalidParameter(format!("rho {} and mu {} must be positive", self.rho, self.mu)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeScheme {
    /// Time step, s.
    pub dt: f64,
    /// Implicitness of viscous and convective terms; 1 is backward Euler,
    /// 0.5 Crank–Nicolson. Pressure and continuity are always implicit.
    pub theta: f64,
}

impl Default for TimeScheme {
    fn default() -> Self {
        TimeScheme { dt: 2e-4, theta: 1.0 }
    }
}

impl TimeScheme {
    pub fn validate(&self) -> Result<(), FemError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(FemError::InvalidParameter(format!("dt {} must be positive", self.dt)));
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(FemError::InvalidParameter(format!("theta {} must lie in [0.5, 1]", self.theta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stabilization {
    pub supg: bool,
    pub pspg: bool,
    pub lsic: bool,
    /// Inertial backflow penalty on the traction-free FV patch.
    pub backflow: bool,
    /// `false` drops the convective term entirely (Stokes flow).
    pub convection: bool,
}

impl Default for Stabilization {
    fn default() -> Self {
        Stabilization { supg: true, pspg: true, lsic: true, backflow: false, convection: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardConfig {
    pub max_iter: usize,
    /// Stop once the nonlinear residual has dropped by this factor.
    pub residual_drop: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig { max_iter: 3, residual_drop: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProfileShape {
    /// Solution of a surface Poisson problem, zero on the patch rim.
    #[default]
    Poisson,
    /// Uniform on interior patch nodes, zero on the rim.
    Flat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    pub u: Vec<Vec3>,
    pub p: Vec<f64>,
    pub t: f64,
    pub step: usize,
    pub period: usize,
}

impl SimulationState {
    /// Fluid at rest at t = 0.
    pub fn zeros(n_nodes: usize) -> Self {
        SimulationState { u: vec![Vec3::zeros(); n_nodes], p: vec![0.0; n_nodes], t: 0.0, step: 0, period: 0 }
    }

    pub fn n_nodes(&self) -> usize {
        self.p.len()
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().all(|v| v.is_finite()) && self.u.iter().all(|v| v.iter().all(|c| c.is_finite()))
    }

    /// Interleaved `[ux, uy, uz, p]` per node.
    pub fn to_dofs(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(4 * self.n_nodes());
        for (u, p) in self.u.iter().zip(&self.p) {
            x.extend_from_slice(&[u.x, u.y, u.z, *p]);
        }
        x
    }

    pub fn set_dofs(&mut self, x: &[f64]) {
        for (i, c) in x.chunks_exact(4).enumerate() {
            self.u[i] = Vec3::new(c[0], c[1], c[2]);
            self.p[i] = c[3];
        }
    }
}

/// Essential boundary conditions: at most one velocity per node, plus
/// optional pressure pins for closed domains.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletSet {
    velocity: Vec<Option<Vec3>>,
    pressure: Vec<Option<f64>>,
}

impl DirichletSet {
    pub fn new(n_nodes: usize) -> Self {
        DirichletSet { velocity: vec![None; n_nodes], pressure: vec![None; n_nodes] }
    }

    /// Sets `node` unless it is already constrained; returns whether it was set.
    pub fn insert_if_free(&mut self, node: usize, v: Vec3) -> bool {
        if self.velocity[node].is_some() {
            return false;
        }
        self.velocity[node] = Some(v);
        true
    }

    pub fn set(&mut self, node: usize, v: Vec3) {
        self.velocity[node] = Some(v);
    }

    pub fn pin_pressure(&mut self, node: usize, p: f64) {
        self.pressure[node] = Some(p);
    }

    /// No-slip on every WALL node.
    pub fn walls(mesh: &crate::mesh::Mesh) -> Self {
        let mut d = DirichletSet::new(mesh.n_nodes());
        for n in mesh.patch_nodes(PatchLabel::WALL) {
            d.set(n, Vec3::zeros());
        }
        d
    }

    /// Adds a fragment, leaving already-constrained nodes untouched.
    pub fn merge(&mut self, fragment: &DirichletSet) {
        for (i, v) in fragment.velocity.iter().enumerate() {
            if let Some(v) = v {
                self.insert_if_free(i, *v);
            }
        }
        for (i, p) in fragment.pressure.iter().enumerate() {
            if p.is_some() && self.pressure[i].is_none() {
                self.pressure[i] = *p;
            }
        }
    }

    pub fn velocity(&self, node: usize) -> Option<Vec3> {
        self.velocity[node]
    }

    pub fn constraints(&self) -> impl Iterator<Item = (usize, Vec3)> + '_ {
        self.velocity.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i, v)))
    }

    pub fn len(&self) -> usize {
        self.velocity.iter().filter(|v| v.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fixed value per interleaved degree of freedom.
    pub fn dof_values(&self) -> Vec<Option<f64>> {
        let mut out = vec![None; 4 * self.velocity.len()];
        for (i, (v, p)) in self.velocity.iter().zip(&self.pressure).enumerate() {
            if let Some(v) = v {
                for c in 0..3 {
                    out[4 * i + c] = Some(v[c]);
                }
            }
            out[4 * i + 3] = *p;
        }
        out
    }

    /// Writes the constrained values into `state`.
    pub fn impose(&self, state: &mut SimulationState) {
        for (i, v) in self.constraints() {
            state.u[i] = v;
        }
        for (i, p) in self.pressure.iter().enumerate() {
            if let Some(p) = p {
                state.p[i] = *p;
            }
        }
    }
}
