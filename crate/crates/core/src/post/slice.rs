//! Velocity sampling on planar cross-sections.

use super::PostError;
use crate::fem::SimulationState;
use crate::mesh::{Mesh, Vec3};

/// Square sampling window of side `2 * half_width` centred on `point`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlicePlane {
    pub point: [f64; 3],
    pub normal: [f64; 3],
    pub half_width: f64,
    /// Samples per side.
    pub resolution: usize,
}

impl SlicePlane {
    pub fn validate(&self) -> Result<(), PostError> {
        let n = Vec3::from(self.normal).norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(PostError::InvalidPlane(format!("normal has length {n}, expected 1")));
        }
        if !(self.half_width > 0.0) || self.resolution < 2 {
            return Err(PostError::InvalidPlane("half_width must be positive and resolution at least 2".into()));
        }
        Ok(())
    }

    /// Orthonormal in-plane axes.
    pub fn axes(&self) -> (Vec3, Vec3) {
        let n = Vec3::from(self.normal);
        let reference = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let e1 = n.cross(&reference).normalize();
        let e2 = n.cross(&e1);
        (e1, e2)
    }

    pub fn sample_point(&self, i: usize, j: usize) -> Vec3 {
        let (e1, e2) = self.axes();
        let step = 2.0 * self.half_width / (self.resolution - 1) as f64;
        let s = -self.half_width + step * i as f64;
        let r = -self.half_width + step * j as f64;
        Vec3::from(self.point) + e1 * s + e2 * r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceGrid {
    pub plane: SlicePlane,
    /// Row-major `resolution × resolution`; `None` outside the mesh.
    pub velocity: Vec<Option<Vec3>>,
}

impl SliceGrid {
    pub fn magnitude(&self, i: usize, j: usize) -> Option<f64> {
        self.velocity[j * self.plane.resolution + i].map(|v| v.norm())
    }

    pub fn magnitudes(&self) -> Vec<Option<f64>> {
        self.velocity.iter().map(|v| v.map(|v| v.norm())).collect()
    }
}

/// Uniform-bin search structure for finding the tetrahedron containing a point.
#[derive(Debug, Clone)]
pub struct PointLocator {
    lo: Vec3,
    cell: Vec3,
    dims: [usize; 3],
    bins: Vec<Vec<u32>>,
}

impl PointLocator {
    pub fn new(mesh: &Mesh) -> Self {
        let (lo, hi) = mesh.bounds();
        let k = ((mesh.n_el() as f64).cbrt().ceil() as usize).clamp(1, 128);
        let dims = [k; 3];
        let ext = hi - lo;
        let cell = Vec3::new(ext.x.max(1e-300) / k as f64, ext.y.max(1e-300) / k as f64, ext.z.max(1e-300) / k as f64);
        let mut loc = PointLocator { lo, cell, dims, bins: vec![Vec::new(); k * k * k] };
        for e in 0..mesh.n_el() {
            let p = mesh.tet_points(e);
            let mut a = *p[0];
            let mut b = *p[0];
            for q in &p[1..] {
                a = a.inf(*q);
                b = b.sup(*q);
            }
            let (ia, ib) = (loc.bin_of(&a), loc.bin_of(&b));
            for z in ia[2]..=ib[2] {
                for y in ia[1]..=ib[1] {
                    for x in ia[0]..=ib[0] {
                        loc.bins[(z * dims[1] + y) * dims[0] + x].push(e as u32);
                    }
                }
            }
        }
        loc
    }

    fn bin_of(&self, p: &Vec3) -> [usize; 3] {
        std::array::from_fn(|d| {
            let f = ((p[d] - self.lo[d]) / self.cell[d]).floor();
            (f.max(0.0) as usize).min(self.dims[d] - 1)
        })
    }

    /// Element containing `p` and its barycentric coordinates.
    pub fn locate(&self, mesh: &Mesh, p: &Vec3) -> Option<(usize, [f64; 4])> {
        let (lo, hi) = (self.lo, self.lo + self.cell.component_mul(&Vec3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64)));
        let slack = 1e-9 * (hi - lo).norm();
        if (0..3).any(|d| p[d] < lo[d] - slack || p[d] > hi[d] + slack) {
            return None;
        }
        let b = self.bin_of(p);
        for &e in &self.bins[(b[2] * self.dims[1] + b[1]) * self.dims[0] + b[0]] {
            let e = e as usize;
            let pts = mesh.tet_points(e);
            let c = (pts[0] + pts[1] + pts[2] + pts[3]) / 4.0;
            let g = mesh.shape_gradients(e);
            let lam: [f64; 4] = std::array::from_fn(|a| 0.25 + g[a].dot(&(p - c)));
            if lam.iter().all(|&l| l >= -1e-10) {
                return Some((e, lam));
            }
        }
        None
    }
}

/// Samples velocity on a regular grid in `plane` by P1 interpolation.
pub fn slice_velocity(mesh: &Mesh, state: &SimulationState, plane: &SlicePlane) -> Result<SliceGrid, PostError> {
    slice_with(mesh, &PointLocator::new(mesh), state, plane)
}

pub(crate) fn slice_with(mesh: &Mesh, loc: &PointLocator, state: &SimulationState, plane: &SlicePlane) -> Result<SliceGrid, PostError> {
    plane.validate()?;
    let r = plane.resolution;
    let mut velocity = Vec::with_capacity(r * r);
    for j in 0..r {
        for i in 0..r {
            let p = plane.sample_point(i, j);
            velocity.push(loc.locate(mesh, &p).map(|(e, lam)| {
                let t = mesh.tets()[e];
                (0..4).map(|a| state.u[t[a]] * lam[a]).sum::<Vec3>()
            }));
        }
    }
    if velocity.iter().all(Option::is_none) {
        return Err(PostError::PlaneMissesMesh);
    }
    Ok(SliceGrid { plane: *plane, velocity })
}
