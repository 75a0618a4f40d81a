//! Idealized end-to-side anastomosis: a straight artery with a vein attached
//! to its side.
//!
//! The mesh is cut from a structured background lattice (cubes split into six
//! tetrahedra along a common diagonal, hence conforming everywhere). Elements
//! whose centroid lies in the union of the two vessels are kept, then the
//! boundary nodes are pulled onto the exact vessel surfaces as far as element
//! quality allows. The artery end caps coincide with lattice planes and are
//! exactly flat.

use std::collections::HashMap;

use super::generate::{kuhn_cube, orient};
use super::{signed_volume, Mesh, MeshError, PatchLabel, Vec3, TET_FACES};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JunctionParams {
    pub artery_radius: f64,
    pub vein_radius: f64,
    /// Artery spans x in [0, artery_length]; PA at x = 0, DA at the far end.
    pub artery_length: f64,
    /// Vein length measured along its axis from the artery axis.
    pub vein_length: f64,
    /// Angle between the vein axis and +x, in radians.
    pub angle: f64,
    /// Axial position of the vein axis on the artery axis (m).
    pub junction_position: f64,
    /// Lattice spacing (m).
    pub cell_size: f64,
}

impl JunctionParams {
    pub fn new(artery_radius: f64, vein_radius: f64, artery_length: f64, vein_length: f64, angle: f64) -> Self {
        JunctionParams {
            artery_radius,
            vein_radius,
            artery_length,
            vein_length,
            angle,
            junction_position: 0.5 * artery_length,
            cell_size: artery_radius / 3.0,
        }
    }

    fn axis(&self) -> Vec3 {
        Vec3::new(self.angle.cos(), self.angle.sin(), 0.0)
    }

    fn origin(&self) -> Vec3 {
        Vec3::new(self.junction_position, 0.0, 0.0)
    }
}

struct Shape<'a> {
    p: &'a JunctionParams,
    d: Vec3,
    c: Vec3,
}

impl Shape<'_> {
    fn in_artery(&self, q: &Vec3, slack: f64) -> bool {
        q.x >= -slack
            && q.x <= self.p.artery_length + slack
            && (q.y * q.y + q.z * q.z).sqrt() <= self.p.artery_radius + slack
    }

    fn vein_coords(&self, q: &Vec3) -> (f64, Vec3) {
        let rel = q - self.c;
        let s = rel.dot(&self.d);
        (s, rel - s * self.d)
    }

    fn in_vein(&self, q: &Vec3, slack: f64) -> bool {
        let (s, w) = self.vein_coords(q);
        s >= -slack && s <= self.p.vein_length + slack && w.norm() <= self.p.vein_radius + slack
    }

    fn inside(&self, q: &Vec3) -> bool {
        self.in_artery(q, 0.0) || self.in_vein(q, 0.0)
    }

    /// Nearest point of the union's boundary among the analytic surface pieces.
    fn closest_boundary_point(&self, q: &Vec3) -> Vec3 {
        let (ra, rv, la, lv) = (self.p.artery_radius, self.p.vein_radius, self.p.artery_length, self.p.vein_length);
        let eps = 1e-9 * ra;
        let mut best: Option<(f64, Vec3)> = None;
        let mut consider = |cand: Vec3, valid: bool| {
            if valid {
                let dist = (cand - q).norm();
                if best.map_or(true, |(b, _)| dist < b) {
                    best = Some((dist, cand));
                }
            }
        };
        let radial = |y: f64, z: f64, r: f64, clamp: bool| {
            let n = (y * y + z * z).sqrt();
            if n == 0.0 || (clamp && n <= r) {
                (y, z)
            } else {
                (y * r / n, z * r / n)
            }
        };
        // artery lateral surface and caps
        let (y, z) = radial(q.y, q.z, ra, false);
        let cand = Vec3::new(q.x.clamp(0.0, la), y, z);
        consider(cand, !self.in_vein(&cand, -eps));
        let (y, z) = radial(q.y, q.z, ra, true);
        for x in [0.0, la] {
            let cand = Vec3::new(x, y, z);
            consider(cand, !self.in_vein(&cand, -eps));
        }
        // vein lateral surface and far cap
        let (s, w) = self.vein_coords(q);
        let wn = w.norm();
        if wn > 0.0 {
            let cand = self.c + s.clamp(0.0, lv) * self.d + w * (rv / wn);
            consider(cand, !self.in_artery(&cand, -eps));
        }
        let wc = if wn > rv { w * (rv / wn) } else { w };
        let cand = self.c + lv * self.d + wc;
        consider(cand, !self.in_artery(&cand, -eps));
        best.map(|(_, c)| c).unwrap_or(*q)
    }
}

fn validate(p: &JunctionParams) -> Result<(), MeshError> {
    let bad = |m: String| Err(MeshError::InvalidParameter(m));
    let vals = [p.artery_radius, p.vein_radius, p.artery_length, p.vein_length, p.cell_size, p.junction_position];
    if vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return bad("radii, lengths, junction position and cell size must be positive".into());
    }
    if !(p.angle > 0.0 && p.angle < std::f64::consts::PI) {
        return bad(format!("anastomosis angle {} must lie strictly between 0 and pi", p.angle));
    }
    if p.vein_radius > p.artery_radius {
        return bad(format!(
            "vein radius {} exceeds artery radius {}: the vein base would protrude through the artery wall",
            p.vein_radius, p.artery_radius
        ));
    }
    if p.cell_size > 0.5 * p.vein_radius {
        return bad(format!("cell size {} must not exceed half the vein radius {}", p.cell_size, p.vein_radius));
    }
    let shape = Shape { p, d: p.axis(), c: p.origin() };
    let h = p.cell_size;
    let e1 = Vec3::new(-p.angle.sin(), p.angle.cos(), 0.0);
    let e2 = Vec3::z();
    let (ns, nt) = (200, 48);
    for i in 0..=ns {
        let s = p.vein_length * i as f64 / ns as f64;
        for j in 0..nt {
            let a = 2.0 * std::f64::consts::PI * j as f64 / nt as f64;
            let q = shape.c + s * shape.d + p.vein_radius * (a.cos() * e1 + a.sin() * e2);
            if q.y.abs() <= p.artery_radius + h && (q.x < 2.0 * h || q.x > p.artery_length - 2.0 * h) {
                return bad(format!(
                    "vein surface reaches x = {:.4e} inside the artery slab; it would cut an artery end cap \
                     (increase the angle or move the junction away from the ends)",
                    q.x
                ));
            }
        }
    }
    let cap_low = p.vein_length * p.angle.sin() - p.vein_radius * p.angle.cos().abs();
    if cap_low < p.artery_radius + 2.0 * h {
        return bad(format!(
            "vein end cap dips to y = {cap_low:.4e}, inside or too close to the artery (radius {}); lengthen the vein",
            p.artery_radius
        ));
    }
    Ok(())
}

fn lattice_axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let i0 = (lo / step).floor() as i64 - 1;
    let i1 = (hi / step).ceil() as i64 + 1;
    (i0..=i1).map(|i| i as f64 * step).collect()
}

/// Builds the junction mesh. The artery ends are labeled PA (x = 0) and DA,
/// the far vein end FV, everything else WALL.
pub fn generate_junction(p: &JunctionParams) -> Result<Mesh, MeshError> {
    validate(p)?;
    let shape = Shape { p, d: p.axis(), c: p.origin() };
    let (ra, la, h) = (p.artery_radius, p.artery_length, p.cell_size);

    let tip = shape.c + p.vein_length * shape.d;
    let r_max = ra.max(p.vein_radius);
    let lo = Vec3::new(0.0f64.min(tip.x - r_max), -ra, -r_max);
    let hi = Vec3::new(la.max(tip.x + r_max), tip.y + r_max, r_max);

    // x lattice hits 0 and artery_length exactly so the artery caps are lattice planes
    let nx_art = (la / h).ceil().max(1.0) as i64;
    let hx = la / nx_art as f64;
    let i0 = (lo.x / hx).floor() as i64 - 1;
    let i1 = (hi.x / hx).ceil() as i64 + 1;
    let xs: Vec<f64> = (i0..=i1)
        .map(|i| if i == nx_art { la } else { i as f64 * hx })
        .collect();
    let ys = lattice_axis(lo.y, hi.y, h);
    let zs = lattice_axis(lo.z, hi.z, h);
    let (nx, ny, nz) = (xs.len(), ys.len(), zs.len());
    let id = |i: usize, j: usize, k: usize| (k * ny + j) * nx + i;

    let mut lattice_nodes = Vec::with_capacity(nx * ny * nz);
    for &z in &zs {
        for &y in &ys {
            for &x in &xs {
                lattice_nodes.push(Vec3::new(x, y, z));
            }
        }
    }
    let mut tets = Vec::new();
    let mut cube = Vec::with_capacity(6);
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                cube.clear();
                kuhn_cube(|a, b, c| id(i + a, j + b, k + c), &mut cube);
                for t in &cube {
                    let c = t.iter().map(|&n| lattice_nodes[n]).sum::<Vec3>() / 4.0;
                    if shape.inside(&c) {
                        tets.push(*t);
                    }
                }
            }
        }
    }
    let tets = largest_component(tets);

    // compact node numbering, preserving lattice order
    let mut remap = vec![usize::MAX; lattice_nodes.len()];
    let mut used: Vec<usize> = tets.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    let mut nodes = Vec::with_capacity(used.len());
    for (new, &old) in used.iter().enumerate() {
        remap[old] = new;
        nodes.push(lattice_nodes[old]);
    }
    let mut tets: Vec<[usize; 4]> = tets.into_iter().map(|t| t.map(|n| remap[n])).collect();
    orient(&nodes, &mut tets);

    snap_boundary(&shape, &mut nodes, &tets);

    let lv = p.vein_length;
    let d = shape.d;
    let c0 = shape.c;
    Mesh::with_labeler(nodes.clone(), tets, |_, n, f| {
        let pts = f.map(|i| nodes[i]);
        if n.x < -0.9 && pts.iter().all(|q| q.x == 0.0) {
            PatchLabel::PA
        } else if n.x > 0.9 && pts.iter().all(|q| q.x == la) {
            PatchLabel::DA
        } else if n.dot(&d) > 0.5 && pts.iter().all(|q| (q - c0).dot(&d) >= lv - 0.3 * h) {
            PatchLabel::FV
        } else {
            PatchLabel::WALL
        }
    })
}

fn largest_component(tets: Vec<[usize; 4]>) -> Vec<[usize; 4]> {
    let n = tets.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut faces: HashMap<[usize; 3], usize> = HashMap::with_capacity(2 * n);
    for (e, t) in tets.iter().enumerate() {
        for lf in TET_FACES {
            let mut key = [t[lf[0]], t[lf[1]], t[lf[2]]];
            key.sort_unstable();
            if let Some(&other) = faces.get(&key) {
                let (a, b) = (find(&mut parent, e), find(&mut parent, other));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            } else {
                faces.insert(key, e);
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let mut size = vec![0usize; n];
    for &r in &roots {
        size[r] += 1;
    }
    let Some(best) = (0..n).max_by_key(|&r| (size[r], std::cmp::Reverse(r))) else {
        return tets;
    };
    tets.into_iter().zip(roots).filter(|(_, r)| *r == best).map(|(t, _)| t).collect()
}

/// Moves boundary nodes toward the analytic surface. A move is shortened
/// until every incident element keeps at least 10% of its lattice volume.
fn snap_boundary(shape: &Shape, nodes: &mut [Vec3], tets: &[[usize; 4]]) {
    let mut faces: HashMap<[usize; 3], u32> = HashMap::with_capacity(2 * tets.len());
    for t in tets {
        for lf in TET_FACES {
            let mut key = [t[lf[0]], t[lf[1]], t[lf[2]]];
            key.sort_unstable();
            *faces.entry(key).or_insert(0) += 1;
        }
    }
    let mut on_boundary = vec![false; nodes.len()];
    for (k, c) in &faces {
        if *c == 1 {
            for &n in k {
                on_boundary[n] = true;
            }
        }
    }
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (e, t) in tets.iter().enumerate() {
        for &n in t {
            incident[n].push(e);
        }
    }
    let vol = |nodes: &[Vec3], t: &[usize; 4]| signed_volume([&nodes[t[0]], &nodes[t[1]], &nodes[t[2]], &nodes[t[3]]]);
    let v0: Vec<f64> = tets.iter().map(|t| vol(nodes, t)).collect();

    for _pass in 0..3 {
        for n in 0..nodes.len() {
            if !on_boundary[n] {
                continue;
            }
            let start = nodes[n];
            let target = shape.closest_boundary_point(&start);
            if (target - start).norm() == 0.0 {
                continue;
            }
            for lambda in [1.0, 0.5, 0.25, 0.125] {
                nodes[n] = start + lambda * (target - start);
                if incident[n].iter().all(|&e| vol(nodes, &tets[e]) >= 0.1 * v0[e]) {
                    break;
                }
                nodes[n] = start;
            }
        }
    }
}
