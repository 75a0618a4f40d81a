//! Velocity profiles for Dirichlet flow patches.
//!
//! The profile shape solves `-Δφ = 1` on the patch surface with `φ = 0` on
//! its rim (nodes shared with any other patch). Velocity points along the
//! node normal and is scaled so the discrete flux equals the requested flow
//! rate exactly. On a disc this is the Poiseuille parabola.

use std::collections::{BTreeSet, HashMap};

use super::{DirichletSet, FemError, ProfileShape};
use crate::krylov::{cg, CsrMatrix, PrecondKind, SolverConfig};
use crate::mesh::{Mesh, PatchLabel, Vec3};

/// Nodal velocities per unit flow rate on one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct InflowProfile {
    pub label: PatchLabel,
    pub shape: ProfileShape,
    /// Interior patch nodes and their velocity per m³/s of outgoing flow.
    pub unit: Vec<(usize, Vec3)>,
    /// Nodes on the patch rim; they carry zero velocity.
    pub rim: Vec<usize>,
}

impl InflowProfile {
    /// Velocities for outgoing flow rate `q` (negative enters the domain).
    pub fn velocities(&self, q: f64) -> impl Iterator<Item = (usize, Vec3)> + '_ {
        self.unit.iter().map(move |(n, v)| (*n, v * q))
    }

    /// Constraint fragment for flow rate `q`, rim nodes included at zero.
    pub fn fragment(&self, n_nodes: usize, q: f64) -> DirichletSet {
        let mut d = DirichletSet::new(n_nodes);
        for &n in &self.rim {
            d.set(n, Vec3::zeros());
        }
        for (n, v) in self.velocities(q) {
            d.set(n, v);
        }
        d
    }
}

pub fn build_inflow_profile(mesh: &Mesh, label: PatchLabel, shape: ProfileShape) -> Result<InflowProfile, FemError> {
    let facets: Vec<_> = mesh.facets_with(label).collect();
    if facets.is_empty() {
        return Err(FemError::MissingPatch(label));
    }
    let patch: BTreeSet<usize> = facets.iter().flat_map(|f| f.nodes).collect();
    let rim: BTreeSet<usize> = mesh
        .facets()
        .iter()
        .filter(|f| f.label != label)
        .flat_map(|f| f.nodes)
        .filter(|n| patch.contains(n))
        .collect();
    let interior: Vec<usize> = patch.iter().copied().filter(|n| !rim.contains(n)).collect();
    if interior.is_empty() {
        return Err(FemError::CoarsePatch { label });
    }
    let local: HashMap<usize, usize> = interior.iter().enumerate().map(|(i, &n)| (n, i)).collect();

    let mut normal: HashMap<usize, Vec3> = HashMap::new();
    for f in &facets {
        for n in f.nodes {
            *normal.entry(n).or_insert_with(Vec3::zeros) += f.normal * f.area;
        }
    }
    for v in normal.values_mut() {
        *v = v.normalize();
    }

    let phi: Vec<f64> = match shape {
        ProfileShape::Flat => vec![1.0; interior.len()],
        ProfileShape::Poisson => {
            let mut trip = Vec::new();
            let mut load = vec![0.0; interior.len()];
            for f in &facets {
                let x = f.nodes.map(|n| mesh.nodes()[n]);
                // edge opposite vertex k, oriented cyclically
                let e = [x[2] - x[1], x[0] - x[2], x[1] - x[0]];
                for a in 0..3 {
                    let Some(&ia) = local.get(&f.nodes[a]) else { continue };
                    load[ia] += f.area / 3.0;
                    for b in 0..3 {
                        if let Some(&ib) = local.get(&f.nodes[b]) {
                            trip.push((ia, ib, e[a].dot(&e[b]) / (4.0 * f.area)));
                        }
                    }
                }
            }
            let k = CsrMatrix::from_triplets(interior.len(), &trip)?;
            let cfg = SolverConfig { tol: 1e-13, max_iter: 10 * interior.len() + 100, precond: PrecondKind::Jacobi };
            let (phi, rep) = cg(&k, &load, &vec![0.0; interior.len()], &cfg)?;
            if !rep.converged {
                return Err(FemError::Solver { step: 0, t: 0.0, report: rep });
            }
            phi
        }
    };

    // flux of the field phi * node normal, per unit scale
    let mut flux = 0.0;
    for f in &facets {
        let mut s = 0.0;
        for n in f.nodes {
            if let Some(&i) = local.get(&n) {
                s += phi[i] * normal[&n].dot(&f.normal);
            }
        }
        flux += f.area * s / 3.0;
    }
    let unit = interior.iter().enumerate().map(|(i, &n)| (n, normal[&n] * (phi[i] / flux))).collect();
    Ok(InflowProfile { label, shape, unit, rim: rim.into_iter().collect() })
}
