//! Structured verification geometries.

use std::f64::consts::PI;

use super::{signed_volume, Mesh, MeshError, PatchLabel, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TubeCounts {
    pub nodes: usize,
    pub tets: usize,
    pub perimeter_segments: usize,
}

/// Node and element counts produced by [`generate_tube`].
pub fn tube_counts(n_axial: usize, n_ring: usize) -> TubeCounts {
    TubeCounts {
        nodes: (1 + 3 * n_ring * (n_ring + 1)) * (n_axial + 1),
        tets: 18 * n_ring * n_ring * n_axial,
        perimeter_segments: 6 * n_ring,
    }
}

/// Cross-section of `n_ring` concentric rings; ring `k` carries `6k` nodes.
/// Returns 2D points and counter-clockwise triangles.
fn disc(radius: f64, n_ring: usize) -> (Vec<[f64; 2]>, Vec<[usize; 3]>) {
    let mut pts = vec![[0.0, 0.0]];
    let mut ring_start = vec![0usize];
    for k in 1..=n_ring {
        ring_start.push(pts.len());
        let m = 6 * k;
        let r = radius * k as f64 / n_ring as f64;
        for j in 0..m {
            let a = 2.0 * PI * j as f64 / m as f64;
            pts.push([r * a.cos(), r * a.sin()]);
        }
    }
    let ring_len = |k: usize| if k == 0 { 1 } else { 6 * k };
    let mut tris = Vec::with_capacity(6 * n_ring * n_ring);
    for k in 1..=n_ring {
        let (si, mi) = (ring_start[k - 1], ring_len(k - 1));
        let (so, mo) = (ring_start[k], ring_len(k));
        let inner = |i: usize| si + i % mi;
        let outer = |j: usize| so + j % mo;
        if k == 1 {
            for j in 0..mo {
                tris.push([si, outer(j), outer(j + 1)]);
            }
            continue;
        }
        // sweep both rings by angle, always advancing the one whose next node comes first
        let (mut i, mut j) = (0usize, 0usize);
        while i < mi || j < mo {
            let next_in = (i + 1) as f64 / mi as f64;
            let next_out = (j + 1) as f64 / mo as f64;
            if j < mo && (i == mi || next_out <= next_in) {
                tris.push([inner(i), outer(j), outer(j + 1)]);
                j += 1;
            } else {
                tris.push([inner(i), outer(j), inner(i + 1)]);
                i += 1;
            }
        }
    }
    for t in &mut tris {
        let (a, b, c) = (pts[t[0]], pts[t[1]], pts[t[2]]);
        let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
        if cross < 0.0 {
            t.swap(1, 2);
        }
    }
    (pts, tris)
}

/// Splits the prism over `tri` between two layers into three tetrahedra.
/// The quad diagonals always join the larger-index bottom vertex to the
/// smaller-index top vertex, so neighbouring prisms agree on shared faces.
fn split_prism(tri: [usize; 3], bottom: usize, top: usize, out: &mut Vec<[usize; 4]>) {
    let mut v = tri;
    v.sort_unstable();
    let b = |i: usize| bottom + v[i];
    let t = |i: usize| top + v[i];
    out.push([b(0), b(1), b(2), t(0)]);
    out.push([b(1), b(2), t(0), t(1)]);
    out.push([b(2), t(0), t(1), t(2)]);
}

pub(crate) fn orient(nodes: &[Vec3], tets: &mut [[usize; 4]]) {
    for t in tets.iter_mut() {
        if signed_volume([&nodes[t[0]], &nodes[t[1]], &nodes[t[2]], &nodes[t[3]]]) < 0.0 {
            t.swap(2, 3);
        }
    }
}

/// Straight circular tube along +x: inlet disc at x = 0 (PA), outlet disc at
/// x = `length` (FV), lateral surface WALL.
///
/// `n_axial` is the number of element layers along the axis and `n_ring` the
/// number of radial rings in the cross-section.
pub fn generate_tube(radius: f64, length: f64, n_axial: usize, n_ring: usize) -> Result<Mesh, MeshError> {
    if !(radius > 0.0 && radius.is_finite()) || !(length > 0.0 && length.is_finite()) {
        return Err(MeshError::InvalidParameter(format!("radius {radius} and length {length} must be positive")));
    }
    if n_axial < 2 || n_ring < 1 {
        return Err(MeshError::InvalidParameter(format!("need n_axial >= 2 and n_ring >= 1, got {n_axial}, {n_ring}")));
    }
    let (pts, tris) = disc(radius, n_ring);
    let per_layer = pts.len();
    let mut nodes = Vec::with_capacity(per_layer * (n_axial + 1));
    for l in 0..=n_axial {
        let x = length * l as f64 / n_axial as f64;
        nodes.extend(pts.iter().map(|p| Vec3::new(x, p[0], p[1])));
    }
    let mut tets = Vec::with_capacity(3 * tris.len() * n_axial);
    for l in 0..n_axial {
        for &t in &tris {
            split_prism(t, l * per_layer, (l + 1) * per_layer, &mut tets);
        }
    }
    orient(&nodes, &mut tets);
    let last_layer = n_axial * per_layer;
    Mesh::with_labeler(nodes, tets, |_, _, f| {
        if f.iter().all(|&n| n < per_layer) {
            PatchLabel::PA
        } else if f.iter().all(|&n| n >= last_layer) {
            PatchLabel::FV
        } else {
            PatchLabel::WALL
        }
    })
}

/// Axis-aligned box split into cubes of six tetrahedra sharing the main
/// diagonal. Boundary faces are labeled by `labeler(centroid, normal)`.
pub fn generate_box<F>(lo: Vec3, hi: Vec3, n: [usize; 3], mut labeler: F) -> Result<Mesh, MeshError>
where
    F: FnMut(&Vec3, &Vec3) -> PatchLabel,
{
    if n.iter().any(|&k| k == 0) || (0..3).any(|d| !(hi[d] > lo[d])) {
        return Err(MeshError::InvalidParameter("box needs positive extents and cell counts".into()));
    }
    let (nx, ny, nz) = (n[0] + 1, n[1] + 1, n[2] + 1);
    let id = |i: usize, j: usize, k: usize| (k * ny + j) * nx + i;
    let mut nodes = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                nodes.push(Vec3::new(
                    lo.x + (hi.x - lo.x) * i as f64 / n[0] as f64,
                    lo.y + (hi.y - lo.y) * j as f64 / n[1] as f64,
                    lo.z + (hi.z - lo.z) * k as f64 / n[2] as f64,
                ));
            }
        }
    }
    let mut tets = Vec::with_capacity(6 * n[0] * n[1] * n[2]);
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                kuhn_cube(|a, b, c| id(i + a, j + b, k + c), &mut tets);
            }
        }
    }
    orient(&nodes, &mut tets);
    Mesh::with_labeler(nodes, tets, |c, nrm, _| labeler(c, nrm))
}

/// Six tetrahedra of the unit cube along the (0,0,0)-(1,1,1) diagonal.
pub(crate) fn kuhn_cube<F: Fn(usize, usize, usize) -> usize>(v: F, out: &mut Vec<[usize; 4]>) {
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    for p in PERMS {
        let mut c = [0usize; 3];
        let mut tet = [v(0, 0, 0), 0, 0, 0];
        for (s, &axis) in p.iter().enumerate() {
            c[axis] = 1;
            tet[s + 1] = v(c[0], c[1], c[2]);
        }
        out.push(tet);
    }
}
